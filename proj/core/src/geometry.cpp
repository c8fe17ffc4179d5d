#include "s2m/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace s2m {

namespace {

void bounding_box(const TriMesh& m, Vec3& lo, Vec3& hi) {
  lo = {1e300, 1e300, 1e300};
  hi = {-1e300, -1e300, -1e300};
  for (const Vec3& v : m.vertices) {
    lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
    hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
  }
}

struct NormTransform {
  double scale = 1.0;
  Vec3 center;  // source box center; maps to (0.5,0.5,0.5)
  Vec3 apply(const Vec3& p) const { return (p - center) * scale + Vec3{0.5, 0.5, 0.5}; }
  Vec3 invert(const Vec3& q) const { return (q - Vec3{0.5, 0.5, 0.5}) / scale + center; }
};

NormTransform normalize_transform(const TriMesh& mesh) {
  Vec3 lo, hi;
  bounding_box(mesh, lo, hi);
  const double ext = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  NormTransform t;
  t.center = (lo + hi) * 0.5;
  t.scale = ext > 0 ? 0.9 / ext : 1.0;
  return t;
}

}  // namespace

double TriMesh::surface_area() const {
  double a = 0;
  for (int f = 0; f < static_cast<int>(faces.size()); ++f) a += face_area(f);
  return a;
}

double TriMesh::signed_volume() const {
  double v = 0;
  for (const auto& t : faces) {
    const Vec3 &a = vertices[static_cast<size_t>(t[0])], &b = vertices[static_cast<size_t>(t[1])],
               &c = vertices[static_cast<size_t>(t[2])];
    v += a.dot(b.cross(c)) / 6.0;
  }
  return v;
}

void TriMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (int i = 0; i < 3; ++i)
      if (t[static_cast<size_t>(i)] < 0 || t[static_cast<size_t>(i)] >= nv)
        throw std::runtime_error("face " + std::to_string(f) + " has out-of-range vertex index");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw std::runtime_error("face " + std::to_string(f) + " is degenerate");
  }
}

int64_t VoxelGrid::count_occupied() const {
  int64_t c = 0;
  for (uint8_t v : occupancy) c += v;
  return c;
}

TriMesh normalize_mesh(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw std::runtime_error("normalize_mesh: empty mesh");
  const NormTransform t = normalize_transform(mesh);
  TriMesh out = mesh;
  for (Vec3& v : out.vertices) v = t.apply(v);
  return out;
}

WatertightReport watertight_check(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& f : mesh.faces) {
    for (int i = 0; i < 3; ++i) {
      int a = f[static_cast<size_t>(i)], b = f[static_cast<size_t>((i + 1) % 3)];
      if (a > b) std::swap(a, b);
      edge_count[{a, b}] += 1;
    }
  }
  WatertightReport r;
  for (const auto& [e, c] : edge_count) {
    if (c == 1) r.boundary_edge_count += 1;
    else if (c > 2) r.non_manifold_edge_count += 1;
  }
  r.is_watertight = !mesh.faces.empty() && r.boundary_edge_count == 0 && r.non_manifold_edge_count == 0;
  return r;
}

VoxelGrid voxelize(const TriMesh& mesh, int n) {
  const WatertightReport wr = watertight_check(mesh);
  if (!wr.is_watertight)
    throw std::runtime_error(
        "voxelize: mesh is not watertight (" + std::to_string(wr.boundary_edge_count) +
        " boundary edges); repair it or use an analytic shape");
  VoxelGrid g(n);
  // Parity along +x. The query line is offset by a fixed tiny perturbation in
  // (y,z) so it cannot pass exactly through shared triangle edges of
  // axis-aligned or diagonal geometry.
  const double ey = 7.3e-8, ez = 3.1e-8;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      const double qy = (j + 0.5) / n + ey;
      const double qz = (k + 0.5) / n + ez;
      // gather x crossings of the line (y=qy, z=qz)
      std::vector<double> xs;
      for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[static_cast<size_t>(f[0])];
        const Vec3& b = mesh.vertices[static_cast<size_t>(f[1])];
        const Vec3& c = mesh.vertices[static_cast<size_t>(f[2])];
        // solve in the (y,z) projection
        const double d  = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
        if (d == 0.0) continue;  // projected-degenerate, line parallel in projection
        const double u = ((qy - a.y) * (c.z - a.z) - (c.y - a.y) * (qz - a.z)) / d;
        const double v = ((b.y - a.y) * (qz - a.z) - (qy - a.y) * (b.z - a.z)) / d;
        if (u < 0.0 || v < 0.0 || u + v > 1.0) continue;
        xs.push_back(a.x + u * (b.x - a.x) + v * (c.x - a.x));
      }
      std::sort(xs.begin(), xs.end());
      for (int i = 0; i < n; ++i) {
        const double qx = (i + 0.5) / n;
        const auto it = std::upper_bound(xs.begin(), xs.end(), qx);
        const auto behind = static_cast<int>(xs.end() - it);
        g.set(i, j, k, (behind % 2) == 1);
      }
    }
  }
  return g;
}

PointCloud sample_surface(const TriMesh& mesh, int count, uint64_t seed) {
  if (count < 1) throw std::runtime_error("sample_surface: count must be >= 1");
  std::vector<double> cum;
  cum.reserve(mesh.faces.size());
  double total = 0;
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    total += mesh.face_area(f);
    cum.push_back(total);
  }
  if (total <= 0) throw std::runtime_error("sample_surface: zero-area mesh");
  Rng rng(seed);
  PointCloud pc;
  pc.points.reserve(static_cast<size_t>(count));
  pc.normals.reserve(static_cast<size_t>(count));
  for (int s = 0; s < count; ++s) {
    const double r = rng.next_double() * total;
    const int f = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    const auto& t = mesh.faces[static_cast<size_t>(std::min(f, (int)mesh.faces.size() - 1))];
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    double u = rng.next_double(), v = rng.next_double();
    if (u + v > 1.0) { u = 1.0 - u; v = 1.0 - v; }
    pc.points.push_back(a + (b - a) * u + (c - a) * v);
    pc.normals.push_back((b - a).cross(c - a).normalized());
  }
  return pc;
}

// ---------------- analytic shapes ----------------

namespace {

TriMesh latlong_sphere(double radius, int subdiv) {
  // closed lat-long sphere with pole fans
  const int rings = std::max(3, subdiv), segs = std::max(4, 2 * subdiv);
  TriMesh m;
  m.vertices.push_back({0, 0, radius});   // north pole = 0
  for (int r = 1; r < rings; ++r) {
    const double phi = M_PI * r / rings;
    for (int s = 0; s < segs; ++s) {
      const double th = 2 * M_PI * s / segs;
      m.vertices.push_back({radius * std::sin(phi) * std::cos(th),
                            radius * std::sin(phi) * std::sin(th), radius * std::cos(phi)});
    }
  }
  m.vertices.push_back({0, 0, -radius});  // south pole
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring_v = [&](int r, int s) { return 1 + (r - 1) * segs + (s % segs); };
  for (int s = 0; s < segs; ++s) m.faces.push_back({0, ring_v(1, s), ring_v(1, s + 1)});
  for (int r = 1; r < rings - 1; ++r)
    for (int s = 0; s < segs; ++s) {
      m.faces.push_back({ring_v(r, s), ring_v(r + 1, s), ring_v(r + 1, s + 1)});
      m.faces.push_back({ring_v(r, s), ring_v(r + 1, s + 1), ring_v(r, s + 1)});
    }
  for (int s = 0; s < segs; ++s)
    m.faces.push_back({south, ring_v(rings - 1, s + 1), ring_v(rings - 1, s)});
  return m;
}

TriMesh box_mesh(double hx, double hy, double hz) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? hx : -hx, (i & 2) ? hy : -hy, (i & 4) ? hz : -hz});
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriMesh torus_mesh(double major, double minor, int subdiv) {
  const int nu = std::max(8, 2 * subdiv), nv = std::max(6, subdiv);
  TriMesh m;
  for (int i = 0; i < nu; ++i) {
    const double u = 2 * M_PI * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = 2 * M_PI * j / nv;
      const double r = major + minor * std::cos(v);
      m.vertices.push_back({r * std::cos(u), r * std::sin(u), minor * std::sin(v)});
    }
  }
  auto idx = [&](int i, int j) { return (i % nu) * nv + (j % nv); };
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      m.faces.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
      m.faces.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
    }
  return m;
}

TriMesh capsule_mesh(double radius, double half_len, int subdiv) {
  // hemisphere caps at z = +-half_len joined by a cylinder wall
  const int rings = std::max(2, subdiv / 2), segs = std::max(6, 2 * subdiv);
  TriMesh m;
  m.vertices.push_back({0, 0, half_len + radius});  // top pole
  auto add_ring = [&](double phi, double zoff) {
    for (int s = 0; s < segs; ++s) {
      const double th = 2 * M_PI * s / segs;
      m.vertices.push_back({radius * std::sin(phi) * std::cos(th),
                            radius * std::sin(phi) * std::sin(th),
                            radius * std::cos(phi) + zoff});
    }
  };
  for (int r = 1; r <= rings; ++r) add_ring(0.5 * M_PI * r / rings, half_len);        // top cap
  for (int r = rings; r >= 1; --r) add_ring(M_PI - 0.5 * M_PI * r / rings, -half_len);  // bottom cap
  m.vertices.push_back({0, 0, -half_len - radius});  // bottom pole
  const int bottom = static_cast<int>(m.vertices.size()) - 1;
  const int total_rings = 2 * rings;
  auto ring_v = [&](int r, int s) { return 1 + r * segs + (s % segs); };
  for (int s = 0; s < segs; ++s) m.faces.push_back({0, ring_v(0, s), ring_v(0, s + 1)});
  for (int r = 0; r + 1 < total_rings; ++r)
    for (int s = 0; s < segs; ++s) {
      m.faces.push_back({ring_v(r, s), ring_v(r + 1, s), ring_v(r + 1, s + 1)});
      m.faces.push_back({ring_v(r, s), ring_v(r + 1, s + 1), ring_v(r, s + 1)});
    }
  for (int s = 0; s < segs; ++s)
    m.faces.push_back({bottom, ring_v(total_rings - 1, s + 1), ring_v(total_rings - 1, s)});
  return m;
}

}  // namespace

TriMesh make_shape_mesh(const ShapeSpec& spec, int subdiv) {
  switch (spec.kind) {
    case ShapeSpec::Kind::kSphere: return latlong_sphere(spec.a, subdiv);
    case ShapeSpec::Kind::kBox: return box_mesh(spec.a, spec.b, spec.c);
    case ShapeSpec::Kind::kTorus: return torus_mesh(spec.a, spec.b, subdiv);
    case ShapeSpec::Kind::kCapsule: return capsule_mesh(spec.a, spec.b, subdiv);
  }
  throw std::runtime_error("make_shape_mesh: unknown kind");
}

bool shape_contains(const ShapeSpec& spec, const Vec3& p) {
  switch (spec.kind) {
    case ShapeSpec::Kind::kSphere:
      return p.dot(p) < spec.a * spec.a;
    case ShapeSpec::Kind::kBox:
      return std::abs(p.x) < spec.a && std::abs(p.y) < spec.b && std::abs(p.z) < spec.c;
    case ShapeSpec::Kind::kTorus: {
      const double q = std::sqrt(p.x * p.x + p.y * p.y) - spec.a;
      return q * q + p.z * p.z < spec.b * spec.b;
    }
    case ShapeSpec::Kind::kCapsule: {
      const double dz = std::max(0.0, std::abs(p.z) - spec.b);
      return p.x * p.x + p.y * p.y + dz * dz < spec.a * spec.a;
    }
  }
  return false;
}

VoxelGrid analytic_voxelize(const ShapeSpec& spec, const TriMesh& source, int n) {
  const NormTransform t = normalize_transform(source);
  VoxelGrid g(n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        g.set(i, j, k, shape_contains(spec, t.invert(g.center(i, j, k))));
  return g;
}

// ---------------- OBJ ----------------

TriMesh load_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open OBJ: " + path);
  TriMesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed vertex line");
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // accept "i", "i/..", "i//.."
        const int v = std::atoi(tok.c_str());
        if (v == 0)
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed face index");
        const int resolved = v > 0 ? v - 1 : static_cast<int>(m.vertices.size()) + v;
        if (resolved < 0 || resolved >= static_cast<int>(m.vertices.size()))
          throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                   ": face index out of range");
        idx.push_back(resolved);
      }
      if (idx.size() < 3)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": face with <3 vertices");
      for (size_t i = 1; i + 1 < idx.size(); ++i)  // fan triangulation
        m.faces.push_back({idx[0], idx[i], idx[i + 1]});
    }
    // other tags ignored
  }
  return m;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open OBJ for writing: " + path);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
    os << buf;
  }
  for (const auto& f : mesh.faces) os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  if (!os) throw std::runtime_error("write failure on OBJ: " + path);
}

// ---------------- voxel file ----------------

void save_voxels(const VoxelGrid& g, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open voxel file for writing: " + path);
  os.write("S2MVOX1", 7);
  const uint32_t n = static_cast<uint32_t>(g.n);
  char nb[4];
  for (int i = 0; i < 4; ++i) nb[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  os.write(nb, 4);
  std::vector<uint8_t> packed((g.occupancy.size() + 7) / 8, 0);
  for (size_t i = 0; i < g.occupancy.size(); ++i)
    if (g.occupancy[i]) packed[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
  os.write(reinterpret_cast<const char*>(packed.data()),
           static_cast<std::streamsize>(packed.size()));
  if (!os) throw std::runtime_error("write failure on voxel file: " + path);
}

VoxelGrid load_voxels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open voxel file: " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::memcmp(magic, "S2MVOX1", 7) != 0)
    throw std::runtime_error("bad voxel file magic in " + path);
  unsigned char nb[4];
  is.read(reinterpret_cast<char*>(nb), 4);
  const uint32_t n = static_cast<uint32_t>(nb[0]) | (nb[1] << 8) | (nb[2] << 16) |
                     (static_cast<uint32_t>(nb[3]) << 24);
  VoxelGrid g(static_cast<int>(n));
  std::vector<uint8_t> packed((g.occupancy.size() + 7) / 8);
  is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!is) throw std::runtime_error("truncated voxel file: " + path);
  for (size_t i = 0; i < g.occupancy.size(); ++i)
    g.occupancy[i] = (packed[i / 8] >> (i % 8)) & 1;
  return g;
}

}  // namespace s2m
