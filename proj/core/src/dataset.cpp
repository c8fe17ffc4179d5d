#include "s2m/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace fs = std::filesystem;

namespace s2m {

std::string shape_dir(const std::string& root, const std::string& id) { return root + "/" + id; }

std::string mesh_path(const std::string& root, const std::string& id) {
  return shape_dir(root, id) + "/mesh.obj";
}

std::string sketch_path(const std::string& root, const std::string& id, int view) {
  return shape_dir(root, id) + "/sketch_" + std::to_string(view) + ".s2mskt";
}

std::string view_path(const std::string& root, const std::string& id, int view) {
  return shape_dir(root, id) + "/view_" + std::to_string(view) + ".s2m25d";
}

std::string vox_path(const std::string& root, const std::string& id, int n) {
  return shape_dir(root, id) + "/vox_" + std::to_string(n) + ".s2mvox";
}

std::string manifest_path(const std::string& root) { return root + "/manifest.txt"; }

void write_manifest(const std::string& root, const std::vector<std::string>& ids) {
  std::ofstream out(manifest_path(root));
  if (!out) throw std::runtime_error("cannot write " + manifest_path(root));
  for (const auto& id : ids) out << id << "\n";
}

std::vector<std::string> read_manifest(const std::string& root) {
  std::ifstream in(manifest_path(root));
  if (!in) throw std::runtime_error("cannot open " + manifest_path(root));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  if (ids.empty()) throw std::runtime_error("empty manifest: " + manifest_path(root));
  return ids;
}

std::vector<TrainExample25D> load_train25d_examples(const std::string& root, int image_size,
                                                    int num_views, int sketch_view) {
  const auto ids = read_manifest(root);
  std::vector<TrainExample25D> out;
  for (const auto& id : ids) {
    TrainExample25D ex;
    int s = 0;
    const auto img = load_sketch(sketch_path(root, id, sketch_view), &s);
    if (s != image_size)
      throw std::runtime_error("sketch size " + std::to_string(s) + " != configured " +
                               std::to_string(image_size) + " for shape " + id);
    ex.sketch = sketch_to_tensor(img, s);
    for (int v = 0; v < num_views; ++v) {
      const ViewMap25D map = load_view25d(view_path(root, id, v));
      if (map.size != image_size)
        throw std::runtime_error("view map size mismatch for shape " + id);
      ex.views.push_back(view_map_to_tensor(map));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

ShapeSpec jitter_spec(const std::string& name, Rng& rng) {
  ShapeSpec s;
  auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
  if (name == "sphere") {
    s.kind = ShapeSpec::Kind::kSphere;
    s.a = u(0.35, 0.45);
  } else if (name == "box") {
    s.kind = ShapeSpec::Kind::kBox;
    s.a = u(0.25, 0.45);
    s.b = u(0.25, 0.45);
    s.c = u(0.25, 0.45);
  } else if (name == "torus") {
    s.kind = ShapeSpec::Kind::kTorus;
    s.a = u(0.28, 0.34);
    s.b = u(0.10, 0.14);
  } else if (name == "capsule") {
    s.kind = ShapeSpec::Kind::kCapsule;
    s.a = u(0.18, 0.24);
    s.b = u(0.18, 0.26);
  } else {
    throw std::runtime_error("unknown shape kind: " + name +
                             " (expected sphere, box, torus or capsule)");
  }
  return s;
}

}  // namespace

std::vector<std::string> generate_synthetic_dataset(const std::string& root,
                                                    const GenSynthOptions& opt) {
  if (opt.shapes.empty()) throw std::runtime_error("gen-synth: no shapes requested");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw std::runtime_error("cannot create " + root + ": " + ec.message());

  Rng rng(opt.seed);
  const auto viewpoints = icosahedron_viewpoints(
      opt.num_views == 14 ? ViewpointCount::kFourteen : ViewpointCount::kTwelve, 0.5,
      opt.image_size);

  std::vector<std::string> ids;
  std::map<std::string, size_t> kind_counts;
  for (size_t i = 0; i < opt.shapes.size(); ++i) {
    const std::string& name = opt.shapes[i];
    const ShapeSpec spec = jitter_spec(name, rng);
    char suffix[8];
    std::snprintf(suffix, sizeof suffix, "_%03zu", kind_counts[name]++);
    const std::string id = name + suffix;
    const std::string dir = shape_dir(root, id);
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());

    const TriMesh mesh = normalize_mesh(make_shape_mesh(spec, 24));
    save_obj(mesh, mesh_path(root, id));
    for (int n : opt.vox_resolutions) save_voxels(voxelize(mesh, n), vox_path(root, id, n));
    for (size_t v = 0; v < viewpoints.size(); ++v) {
      const ViewMap25D map = render_view25d(mesh, viewpoints[v]);
      map.validate();
      save_view25d(map, view_path(root, id, static_cast<int>(v)));
      save_sketch(render_sketch_proxy(map, SketchThresholds{}), opt.image_size,
                  sketch_path(root, id, static_cast<int>(v)));
    }
    ids.push_back(id);
  }
  write_manifest(root, ids);
  return ids;
}

}  // namespace s2m
