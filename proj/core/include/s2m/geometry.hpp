#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s2m/tensor.hpp"

namespace s2m {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
  Vec3 operator/(double k) const { return {x / k, y / k, z / k}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0 ? *this / n : Vec3{0, 0, 0};
  }
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
  Vec3 face_normal(int f) const {
    const auto& t = faces[static_cast<size_t>(f)];
    const Vec3 &a = vertices[static_cast<size_t>(t[0])], &b = vertices[static_cast<size_t>(t[1])],
               &c = vertices[static_cast<size_t>(t[2])];
    return (b - a).cross(c - a);  // not normalized; length = 2*area
  }
  double face_area(int f) const { return 0.5 * face_normal(f).norm(); }
  double surface_area() const;
  double signed_volume() const;  // positive for outward-oriented closed meshes
  void validate() const;         // index bounds + degenerate-face check
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty or same size as points, unit length
};

struct VoxelGrid {
  int n = 0;
  std::vector<uint8_t> occupancy;  // n^3, x fastest

  VoxelGrid() = default;
  explicit VoxelGrid(int res) : n(res), occupancy(static_cast<size_t>(res) * res * res, 0) {}

  int64_t index(int i, int j, int k) const {
    return static_cast<int64_t>(k) * n * n + static_cast<int64_t>(j) * n + i;
  }
  bool at(int i, int j, int k) const { return occupancy[static_cast<size_t>(index(i, j, k))] != 0; }
  void set(int i, int j, int k, bool v) {
    occupancy[static_cast<size_t>(index(i, j, k))] = v ? 1 : 0;
  }
  Vec3 center(int i, int j, int k) const {
    return {(i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n};
  }
  int64_t count_occupied() const;
};

struct WatertightReport {
  bool is_watertight = false;
  int boundary_edge_count = 0;
  int non_manifold_edge_count = 0;
};

// Uniform scale + translate so the tight bounding box is centered in [0,1]^3
// with maximal extent 0.9. Idempotent.
TriMesh normalize_mesh(const TriMesh& mesh);

WatertightReport watertight_check(const TriMesh& mesh);

// Occupied iff the voxel center is inside the mesh (ray parity along +x with
// deterministic perturbation of the query line). Requires a watertight mesh.
VoxelGrid voxelize(const TriMesh& mesh, int n);

// Area-weighted surface sampling, uniform within each triangle. Fills face
// normals of the sampled triangles.
PointCloud sample_surface(const TriMesh& mesh, int count, uint64_t seed);

// ---- analytic shapes: matching mesh generators and point predicates ----
struct ShapeSpec {
  enum class Kind { kSphere, kBox, kTorus, kCapsule };
  Kind kind = Kind::kSphere;
  // parameters in the unnormalized frame centered at origin
  double a = 0.45, b = 0.45, c = 0.45;  // sphere: a=radius; box: half extents;
                                        // torus: a=major, b=minor; capsule: a=radius, b=half length
};

TriMesh make_shape_mesh(const ShapeSpec& spec, int subdiv);
// Predicate in the same frame as make_shape_mesh (centered at origin).
bool shape_contains(const ShapeSpec& spec, const Vec3& p);
// Exact occupancy oracle: evaluates the predicate at the voxel centers of
// [0,1]^3 mapped back into the frame of `source` (the origin-centered mesh
// make_shape_mesh produced) through the same transform normalize_mesh applies.
VoxelGrid analytic_voxelize(const ShapeSpec& spec, const TriMesh& source, int n);

// ---- OBJ persistence ----
TriMesh load_obj(const std::string& path);
void save_obj(const TriMesh& mesh, const std::string& path);

// ---- voxel grid file: magic "S2MVOX1", u32 n, n^3 bits LE, x fastest ----
void save_voxels(const VoxelGrid& g, const std::string& path);
VoxelGrid load_voxels(const std::string& path);

}  // namespace s2m
