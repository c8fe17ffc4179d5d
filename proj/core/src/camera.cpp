#include "s2m/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace s2m {

namespace {

constexpr double kBackgroundDepth = 1.0;

void write_map_file(const std::string& path, const char* magic7, int w, int h,
                    const std::vector<const std::vector<double>*>& planes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open map file for writing: " + path);
  os.write(magic7, 7);
  auto put_u32 = [&](uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
  };
  put_u32(static_cast<uint32_t>(w));
  put_u32(static_cast<uint32_t>(h));
  os.put(static_cast<char>(planes.size()));
  for (const auto* p : planes) {
    std::vector<float> f(p->begin(), p->end());
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write failure on map file: " + path);
}

void read_map_file(const std::string& path, const char* magic7, int expected_channels, int* w,
                   int* h, std::vector<std::vector<double>>& planes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open map file: " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, magic7, 7) != 0)
    throw std::runtime_error("bad magic in map file " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  };
  *w = static_cast<int>(get_u32());
  *h = static_cast<int>(get_u32());
  const int channels = is.get();
  if (channels != expected_channels)
    throw std::runtime_error("unexpected channel count in " + path);
  planes.assign(static_cast<size_t>(channels), {});
  const size_t npix = static_cast<size_t>(*w) * static_cast<size_t>(*h);
  for (auto& p : planes) {
    std::vector<float> f(npix);
    is.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(npix * sizeof(float)));
    if (!is) throw std::runtime_error("truncated map file: " + path);
    p.assign(f.begin(), f.end());
  }
}

}  // namespace

Viewpoint make_viewpoint(const Vec3& eye_dir, double half_extent, int image_size) {
  Viewpoint vp;
  vp.eye = eye_dir.normalized();
  Vec3 hint{0, 0, 1};
  if (std::abs(vp.eye.dot(hint)) > 0.999) hint = {0, 1, 0};  // polar fallback
  vp.up = (hint - vp.eye * vp.eye.dot(hint)).normalized();
  vp.ortho_half_extent = half_extent;
  vp.image_size = image_size;
  return vp;
}

std::vector<Viewpoint> icosahedron_viewpoints(ViewpointCount mode, double half_extent,
                                              int image_size) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double inv = 1.0 / std::sqrt(1.0 + phi * phi);
  std::vector<Vec3> dirs;
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0}) {
      dirs.push_back(Vec3{0, s1, s2 * phi} * inv);
      dirs.push_back(Vec3{s1, s2 * phi, 0} * inv);
      dirs.push_back(Vec3{s1 * phi, 0, s2} * inv);
    }
  if (mode == ViewpointCount::kFourteen) {
    dirs.push_back({0, 0, 1});
    dirs.push_back({0, 0, -1});
  }
  std::vector<Viewpoint> out;
  out.reserve(dirs.size());
  for (const Vec3& d : dirs) out.push_back(make_viewpoint(d, half_extent, image_size));
  return out;
}

int default_front_view_index(const std::vector<Viewpoint>& views) {
  const Vec3 target{0, -0.5, std::sqrt(3.0) / 2.0};
  int best = 0;
  double best_dot = -2;
  for (size_t i = 0; i < views.size(); ++i) {
    const double d = views[i].eye.dot(target);
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

void ViewMap25D::validate() const {
  for (int64_t i = 0; i < static_cast<int64_t>(mask.size()); ++i) {
    if (mask[i] >= 0.5) {
      const double nx = normal[i], ny = normal[i + mask.size()], nz = normal[i + 2 * mask.size()];
      const double n = std::sqrt(nx * nx + ny * ny + nz * nz);
      if (std::abs(n - 1.0) > 1e-4)
        throw std::runtime_error("foreground normal not unit length");
      if (depth[i] < -1.0 || depth[i] > 1.0)
        throw std::runtime_error("foreground depth out of [-1,1]");
    } else {
      if (depth[i] != kBackgroundDepth)
        throw std::runtime_error("background depth must be +1");
      if (normal[i] != 0.0 || normal[i + mask.size()] != 0.0 || normal[i + 2 * mask.size()] != 0.0)
        throw std::runtime_error("background normal must be zero");
    }
  }
}

ViewMap25D render_view25d(const TriMesh& mesh, const Viewpoint& vp) {
  const int S = vp.image_size;
  const double ext = vp.ortho_half_extent;
  ViewMap25D out;
  out.size = S;
  out.viewpoint = vp;
  out.depth.assign(static_cast<size_t>(S) * S, kBackgroundDepth);
  out.normal.assign(3 * static_cast<size_t>(S) * S, 0.0);
  out.mask.assign(static_cast<size_t>(S) * S, 0.0);

  const Vec3 center{0.5, 0.5, 0.5};
  const Vec3 xc = vp.right(), yc = vp.up, zc = vp.eye;
  const double step = 2.0 * ext / S;
  std::vector<double> zbuf(static_cast<size_t>(S) * S, 1e300);

  // orthographic rasterization: exact per-pixel-center coverage, nearest hit
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    const auto& t = mesh.faces[static_cast<size_t>(f)];
    double u[3], v[3], d[3];
    for (int i = 0; i < 3; ++i) {
      const Vec3 p = mesh.vertices[static_cast<size_t>(t[static_cast<size_t>(i)])] - center;
      u[i] = p.dot(xc);
      v[i] = p.dot(yc);
      d[i] = -p.dot(zc);  // camera side negative
    }
    const double area2 = (u[1] - u[0]) * (v[2] - v[0]) - (u[2] - u[0]) * (v[1] - v[0]);
    if (area2 == 0.0) continue;
    const double ulo = std::min({u[0], u[1], u[2]}), uhi = std::max({u[0], u[1], u[2]});
    const double vlo = std::min({v[0], v[1], v[2]}), vhi = std::max({v[0], v[1], v[2]});
    // pixel x center: -ext + (px+0.5)*step ; row 0 at top (v = +ext)
    int px0 = static_cast<int>(std::floor((ulo + ext) / step - 0.5));
    int px1 = static_cast<int>(std::ceil((uhi + ext) / step - 0.5));
    int py0 = static_cast<int>(std::floor((ext - vhi) / step - 0.5));
    int py1 = static_cast<int>(std::ceil((ext - vlo) / step - 0.5));
    px0 = std::max(px0, 0); px1 = std::min(px1, S - 1);
    py0 = std::max(py0, 0); py1 = std::min(py1, S - 1);
    Vec3 nw = mesh.face_normal(f).normalized();
    for (int py = py0; py <= py1; ++py) {
      const double pv = ext - (py + 0.5) * step;
      for (int px = px0; px <= px1; ++px) {
        const double pu = -ext + (px + 0.5) * step;
        const double w0 = ((u[1] - pu) * (v[2] - pv) - (u[2] - pu) * (v[1] - pv)) / area2;
        const double w1 = ((u[2] - pu) * (v[0] - pv) - (u[0] - pu) * (v[2] - pv)) / area2;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double pd = w0 * d[0] + w1 * d[1] + w2 * d[2];
        const int64_t idx = out.pix(py, px);
        if (pd < zbuf[static_cast<size_t>(idx)]) {
          zbuf[static_cast<size_t>(idx)] = pd;
          out.depth[idx] = std::clamp(pd / ext, -1.0, 1.0);
          out.mask[idx] = 1.0;
          out.normal[idx] = nw.dot(xc);
          out.normal[idx + static_cast<int64_t>(S) * S] = nw.dot(yc);
          out.normal[idx + 2 * static_cast<int64_t>(S) * S] = nw.dot(zc);
        }
      }
    }
  }
  return out;
}

std::vector<double> render_sketch_proxy(const ViewMap25D& view, const SketchThresholds& th) {
  const int S = view.size;
  const int64_t N = static_cast<int64_t>(S) * S;
  std::vector<double> sk(static_cast<size_t>(N), 0.0);
  const double cos_th = std::cos(th.normal_angle_deg * M_PI / 180.0);
  auto fg = [&](int y, int x) { return view.mask[view.pix(y, x)] >= 0.5; };
  const int dy[4] = {0, 0, 1, -1}, dx[4] = {1, -1, 0, 0};
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const int64_t i = view.pix(y, x);
      bool edge = false;
      for (int k = 0; k < 4 && !edge; ++k) {
        const int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= S || nx < 0 || nx >= S) continue;
        const int64_t j = view.pix(ny, nx);
        if (fg(y, x) != fg(ny, nx)) {
          edge = fg(y, x);  // draw on the foreground side of the silhouette
        } else if (fg(y, x)) {
          if (std::abs(view.depth[i] - view.depth[j]) > th.depth_step) edge = true;
          else {
            double dot = 0;
            for (int c = 0; c < 3; ++c) dot += view.normal[i + c * N] * view.normal[j + c * N];
            if (dot < cos_th) edge = true;
          }
        }
      }
      if (edge) sk[static_cast<size_t>(i)] = 1.0;
    }
  }
  return sk;
}

void save_view25d(const ViewMap25D& v, const std::string& path) {
  const int64_t N = static_cast<int64_t>(v.size) * v.size;
  std::vector<double> nx(v.normal.begin(), v.normal.begin() + N);
  std::vector<double> ny(v.normal.begin() + N, v.normal.begin() + 2 * N);
  std::vector<double> nz(v.normal.begin() + 2 * N, v.normal.begin() + 3 * N);
  write_map_file(path, "S2M25D1", v.size, v.size, {&v.depth, &nx, &ny, &nz, &v.mask});
}

ViewMap25D load_view25d(const std::string& path) {
  int w = 0, h = 0;
  std::vector<std::vector<double>> planes;
  read_map_file(path, "S2M25D1", 5, &w, &h, planes);
  if (w != h) throw std::runtime_error("non-square 2.5D map in " + path);
  ViewMap25D v;
  v.size = w;
  v.depth = std::move(planes[0]);
  v.normal.reserve(3 * planes[1].size());
  for (int c = 1; c <= 3; ++c)
    v.normal.insert(v.normal.end(), planes[static_cast<size_t>(c)].begin(),
                    planes[static_cast<size_t>(c)].end());
  v.mask = std::move(planes[4]);
  return v;
}

void save_sketch(const std::vector<double>& img, int size, const std::string& path) {
  write_map_file(path, "S2MSKT1", size, size, {&img});
}

std::vector<double> load_sketch(const std::string& path, int* size_out) {
  int w = 0, h = 0;
  std::vector<std::vector<double>> planes;
  read_map_file(path, "S2MSKT1", 1, &w, &h, planes);
  if (w != h) throw std::runtime_error("non-square sketch in " + path);
  *size_out = w;
  return std::move(planes[0]);
}

}  // namespace s2m
