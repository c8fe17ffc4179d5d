#pragma once

#include <cstdint>
#include <string>

#include "s2m/geometry.hpp"

namespace s2m {

struct EvalReport {
  std::string metric;
  double value = 0;
  int samples = 0;
  uint64_t seed = 0;
  std::string note;  // units / formula note

  // line grammar: metric=<name> value=<float> samples=<int> seed=<int>
  std::string line() const;
};

// Symmetric squared-distance chamfer:
//   CD(A,B) = mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2
// Exact nearest neighbors; the spatial index reproduces the brute-force
// result bit-for-bit.
double chamfer_point_cloud(const PointCloud& a, const PointCloud& b);
double chamfer_point_cloud_brute(const PointCloud& a, const PointCloud& b);  // O(n^2) oracle

// Area-weighted surface sampling of `samples` points per mesh, then chamfer.
EvalReport chamfer_mesh(const TriMesh& pred, const TriMesh& gt, int samples, uint64_t seed);

// |a AND b| / |a OR b|; both empty -> 1.
double voxel_iou(const VoxelGrid& a, const VoxelGrid& b);

}  // namespace s2m
