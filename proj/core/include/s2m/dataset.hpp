#pragma once

#include <string>
#include <vector>

#include "s2m/camera.hpp"
#include "s2m/geometry.hpp"
#include "s2m/sketch25d.hpp"

namespace s2m {

// On-disk dataset layout:
//   <root>/manifest.txt                       one shape_id per line
//   <root>/<shape_id>/mesh.obj                normalized ground-truth mesh
//   <root>/<shape_id>/sketch_<view>.s2mskt    line-drawing proxy per viewpoint
//   <root>/<shape_id>/view_<v>.s2m25d         rendered 2.5D map per viewpoint
//   <root>/<shape_id>/vox_<n>.s2mvox          voxel grid per stored resolution

std::string shape_dir(const std::string& root, const std::string& id);
std::string mesh_path(const std::string& root, const std::string& id);
std::string sketch_path(const std::string& root, const std::string& id, int view);
std::string view_path(const std::string& root, const std::string& id, int view);
std::string vox_path(const std::string& root, const std::string& id, int n);
std::string manifest_path(const std::string& root);

void write_manifest(const std::string& root, const std::vector<std::string>& ids);
std::vector<std::string> read_manifest(const std::string& root);  // missing/empty -> error

// Loads (sketch at sketch_view, all num_views maps) pairs for every manifest
// entry, validating sizes against the expected image size.
std::vector<TrainExample25D> load_train25d_examples(const std::string& root, int image_size,
                                                    int num_views, int sketch_view);

struct GenSynthOptions {
  std::vector<std::string> shapes;  // subset of sphere, box, torus, capsule
  int num_views = 12;
  int image_size = 64;
  std::vector<int> vox_resolutions = {16, 32};
  uint64_t seed = 1;
};

// Generates the synthetic dataset: primitive meshes with seed-jittered
// parameters, normalized, voxelized, rendered from the icosahedron
// viewpoints, with sketch proxies. Returns the shape ids written.
std::vector<std::string> generate_synthetic_dataset(const std::string& root,
                                                    const GenSynthOptions& opt);

}  // namespace s2m
