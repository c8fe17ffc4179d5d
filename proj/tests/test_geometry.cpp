#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "helpers.hpp"
#include "s2m/geometry.hpp"

using namespace s2m;

namespace {

TriMesh unit_cube_at_origin() {
  ShapeSpec box;
  box.kind = ShapeSpec::Kind::kBox;
  box.a = box.b = box.c = 0.5;
  return make_shape_mesh(box, 1);
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("normalize_mesh centers the unit cube with 0.9 extent") {
  const TriMesh m = normalize_mesh(unit_cube_at_origin());
  Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  for (const Vec3& v : m.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  CHECK(lo.x == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(hi.x == doctest::Approx(0.95).epsilon(1e-12));
  CHECK((lo.y + hi.y) / 2 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(hi.z - lo.z == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("normalize_mesh is idempotent and scale/translation invariant") {
  ShapeSpec box;
  box.kind = ShapeSpec::Kind::kBox;
  box.a = 0.5;
  box.b = 0.25;
  box.c = 0.25;
  const TriMesh base = normalize_mesh(make_shape_mesh(box, 1));
  const TriMesh twice = normalize_mesh(base);
  TriMesh transformed = base;
  for (Vec3& v : transformed.vertices) v = v * 3.7 + Vec3{-2.0, 5.0, 0.25};
  const TriMesh renorm = normalize_mesh(transformed);
  for (size_t i = 0; i < base.vertices.size(); ++i) {
    CHECK((twice.vertices[i] - base.vertices[i]).norm() < 1e-12);
    CHECK((renorm.vertices[i] - base.vertices[i]).norm() < 1e-9);
  }
  // elongated 2:1:1: longest axis spans 0.9, others 0.45
  Vec3 lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  for (const Vec3& v : base.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  CHECK(hi.x - lo.x == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(hi.y - lo.y == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(hi.z - lo.z == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("normalize_mesh rejects an empty mesh") {
  CHECK_THROWS(normalize_mesh(TriMesh{}));
}

TEST_CASE("voxelizing the centered box occupies exactly the analytic voxels") {
  // box [0.25,0.75]^3: at n=16 the centers with index 4..11 per axis are inside
  TriMesh box = unit_cube_at_origin();
  for (Vec3& v : box.vertices) v = v * 0.5 + Vec3{0.5, 0.5, 0.5};
  const VoxelGrid g = voxelize(box, 16);
  CHECK(g.count_occupied() == 512);
  for (int k = 0; k < 16; ++k)
    for (int j = 0; j < 16; ++j)
      for (int i = 0; i < 16; ++i) {
        const bool inside = i >= 4 && i <= 11 && j >= 4 && j <= 11 && k >= 4 && k <= 11;
        CHECK(g.at(i, j, k) == inside);
      }
}

TEST_CASE("voxelization of primitives matches the center-predicate oracle exactly") {
  for (auto kind : {ShapeSpec::Kind::kSphere, ShapeSpec::Kind::kBox, ShapeSpec::Kind::kTorus,
                    ShapeSpec::Kind::kCapsule}) {
    ShapeSpec spec;
    spec.kind = kind;
    if (kind == ShapeSpec::Kind::kTorus) {
      spec.a = 0.3;
      spec.b = 0.12;
    } else if (kind == ShapeSpec::Kind::kCapsule) {
      spec.a = 0.2;
      spec.b = 0.22;
    }
    const TriMesh original = make_shape_mesh(spec, 64);
    const VoxelGrid mesh_vox = voxelize(normalize_mesh(original), 16);
    const VoxelGrid oracle = analytic_voxelize(spec, original, 16);
    // high-subdiv meshes approximate the analytic surface; only voxels whose
    // center sits close to the surface may legitimately disagree
    int64_t disagreements = 0;
    for (size_t i = 0; i < oracle.occupancy.size(); ++i)
      if (mesh_vox.occupancy[i] != oracle.occupancy[i]) ++disagreements;
    CHECK(disagreements <= static_cast<int64_t>(oracle.occupancy.size() / 100));
    if (kind == ShapeSpec::Kind::kBox) CHECK(disagreements == 0);  // faces are exact planes
  }
}

TEST_CASE("voxelization is monotone under shape containment") {
  ShapeSpec small, big;
  small.a = 0.30;
  big.a = 0.42;
  const TriMesh small_mesh = make_shape_mesh(small, 32);
  const TriMesh big_mesh = make_shape_mesh(big, 32);
  // same frame: translate both into [0,1]^3 with the same offset
  auto shift = [](TriMesh m) {
    for (Vec3& v : m.vertices) v += Vec3{0.5, 0.5, 0.5};
    return m;
  };
  const VoxelGrid ga = voxelize(shift(small_mesh), 24);
  const VoxelGrid gb = voxelize(shift(big_mesh), 24);
  for (size_t i = 0; i < ga.occupancy.size(); ++i)
    if (ga.occupancy[i]) CHECK(gb.occupancy[i]);
}

TEST_CASE("voxelize requires a watertight mesh") {
  TriMesh tri;
  tri.vertices = {{0.2, 0.2, 0.2}, {0.8, 0.2, 0.2}, {0.2, 0.8, 0.2}};
  tri.faces = {{0, 1, 2}};
  CHECK_THROWS(voxelize(tri, 8));
}

TEST_CASE("watertight_check classifies meshes") {
  const TriMesh box = unit_cube_at_origin();
  const WatertightReport wr = watertight_check(box);
  CHECK(wr.is_watertight);
  CHECK(wr.boundary_edge_count == 0);
  CHECK(wr.non_manifold_edge_count == 0);

  TriMesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tri.faces = {{0, 1, 2}};
  const WatertightReport tr = watertight_check(tri);
  CHECK_FALSE(tr.is_watertight);
  CHECK(tr.boundary_edge_count == 3);
}

TEST_CASE("primitive meshes are watertight and outward-oriented") {
  for (auto kind : {ShapeSpec::Kind::kSphere, ShapeSpec::Kind::kBox, ShapeSpec::Kind::kTorus,
                    ShapeSpec::Kind::kCapsule}) {
    ShapeSpec spec;
    spec.kind = kind;
    const TriMesh m = make_shape_mesh(spec, 16);
    m.validate();
    CHECK(watertight_check(m).is_watertight);
    CHECK(m.signed_volume() > 0.0);
  }
}

TEST_CASE("surface sampling is deterministic, on-surface and area-weighted") {
  TriMesh two;
  // triangle A with area 3x that of triangle B, both in z = 0.3
  two.vertices = {{0.1, 0.1, 0.3}, {0.7, 0.1, 0.3}, {0.1, 0.7, 0.3},
                  {0.8, 0.8, 0.3}, {0.8, 0.6, 0.3}, {0.6, 0.8, 0.3}};
  two.faces = {{0, 1, 2}, {3, 4, 5}};
  const double area_a = two.face_area(0), area_b = two.face_area(1);
  CHECK(area_a / area_b == doctest::Approx(9.0));

  const int n = 10000;
  const PointCloud pc = sample_surface(two, n, 77);
  const PointCloud pc2 = sample_surface(two, n, 77);
  REQUIRE(pc.points.size() == static_cast<size_t>(n));
  int in_b = 0;
  for (size_t i = 0; i < pc.points.size(); ++i) {
    CHECK(pc.points[i].z == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(pc.points[i].x == pc2.points[i].x);  // determinism
    if (pc.points[i].x > 0.55 && pc.points[i].y > 0.55) ++in_b;
  }
  const double expect_b = n * area_b / (area_a + area_b);
  CHECK(std::abs(in_b - expect_b) < 4.0 * std::sqrt(expect_b));  // ~4 sigma binomial bound
  REQUIRE(pc.normals.size() == pc.points.size());
  for (const Vec3& nm : pc.normals) CHECK(nm.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("surface sampling with area ratio 3:1 splits counts 3:1") {
  TriMesh two;
  two.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {5, 5, 0}, {6, 5, 0}, {5, 7, 0}};
  two.faces = {{0, 1, 2}, {3, 4, 5}};
  CHECK(two.face_area(0) / two.face_area(1) == doctest::Approx(3.0));
  const PointCloud pc = sample_surface(two, 10000, 5);
  int in_a = 0;
  for (const Vec3& p : pc.points)
    if (p.x < 4.0) ++in_a;
  CHECK(std::abs(in_a / 10000.0 - 0.75) < 0.05 * 0.75);
}

TEST_CASE("OBJ round trip preserves topology and coordinates") {
  const TriMesh m = normalize_mesh(make_shape_mesh(ShapeSpec{}, 8));
  const std::string path = tmp_path("s2m_test_roundtrip.obj");
  save_obj(m, path);
  const TriMesh r = load_obj(path);
  REQUIRE(r.vertices.size() == m.vertices.size());
  REQUIRE(r.faces.size() == m.faces.size());
  for (size_t i = 0; i < m.vertices.size(); ++i)
    CHECK((r.vertices[i] - m.vertices[i]).norm() < 1.8e-6);  // %.6f quantization
  CHECK(r.faces == m.faces);
  std::filesystem::remove(path);
}

TEST_CASE("OBJ loader fan-triangulates quads and reports malformed lines") {
  const std::string path = tmp_path("s2m_test_quad.obj");
  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  }
  const TriMesh q = load_obj(path);
  CHECK(q.faces.size() == 2);
  CHECK(q.faces[0] == std::array<int, 3>{0, 1, 2});
  CHECK(q.faces[1] == std::array<int, 3>{0, 2, 3});

  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 9\n";
  }
  CHECK_THROWS_WITH_AS(load_obj(path), doctest::Contains(":4"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("voxel grid file round trip is exact") {
  Rng rng(9);
  VoxelGrid g(13);
  for (auto& v : g.occupancy) v = rng.next_double() < 0.4 ? 1 : 0;
  const std::string path = tmp_path("s2m_test_grid.s2mvox");
  save_voxels(g, path);
  const VoxelGrid r = load_voxels(path);
  CHECK(r.n == g.n);
  CHECK(r.occupancy == g.occupancy);
  std::filesystem::remove(path);
}

TEST_CASE("shape predicates match their intended geometry") {
  ShapeSpec sphere;
  CHECK(shape_contains(sphere, {0, 0, 0}));
  CHECK_FALSE(shape_contains(sphere, {0.5, 0, 0}));
  ShapeSpec torus;
  torus.kind = ShapeSpec::Kind::kTorus;
  torus.a = 0.3;
  torus.b = 0.1;
  CHECK(shape_contains(torus, {0.3, 0, 0}));
  CHECK_FALSE(shape_contains(torus, {0, 0, 0}));
  ShapeSpec capsule;
  capsule.kind = ShapeSpec::Kind::kCapsule;
  capsule.a = 0.2;
  capsule.b = 0.2;
  CHECK(shape_contains(capsule, {0, 0, 0.35}));
  CHECK_FALSE(shape_contains(capsule, {0, 0, 0.45}));
  CHECK(shape_contains(capsule, {0.15, 0, 0.1}));
}
