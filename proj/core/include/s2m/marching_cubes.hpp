#pragma once

#include <string>
#include <vector>

#include "s2m/geometry.hpp"

namespace s2m {

// Scalar field sampled at the voxel centers of [0,1]^3 (same lattice as
// VoxelGrid). Values above the iso threshold count as inside.
struct ScalarField {
  int n = 0;
  std::vector<double> values;  // n^3, x fastest
  double iso = 0.5;

  ScalarField() = default;
  explicit ScalarField(int res, double fill = 0.0)
      : n(res), values(static_cast<size_t>(res) * res * res, fill) {}

  int64_t index(int i, int j, int k) const {
    return static_cast<int64_t>(k) * n * n + static_cast<int64_t>(j) * n + i;
  }
  double at(int i, int j, int k) const { return values[static_cast<size_t>(index(i, j, k))]; }
  Vec3 center(int i, int j, int k) const {
    return {(i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n};
  }

  static ScalarField from_grid(const VoxelGrid& g);
  // binarize at iso and compare against a grid
  VoxelGrid threshold_grid(double iso) const;
};

// Standard 256-case marching cubes over the padded lattice (one layer of
// outside samples added on every side, so closed fields always close).
// Vertices are welded by lattice-edge id; triangles that collapse after
// welding are dropped. Output faces wind so normals point toward lower
// field values (outward for inside=1 occupancy).
TriMesh marching_cubes(const ScalarField& field, double threshold);

// Uniform Laplacian smoothing (optional post-process, off by default in the
// pipeline; excluded from metric acceptance).
TriMesh laplacian_smooth(const TriMesh& mesh, int iterations, double lambda = 0.5);

// Field dump: magic "S2MFLD1", u32 n, n^3 float32 LE.
void save_field(const ScalarField& f, const std::string& path);
ScalarField load_field(const std::string& path);

}  // namespace s2m
