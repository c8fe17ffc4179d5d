#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace s2m {

// Every tunable of the pipeline in one place. Loaded from a line-oriented
// `key = value` file with `[section]` headers; unknown sections or keys are
// rejected. Defaults below are the desk-scale settings.
struct PipelineConfig {
  // [pipeline]
  uint64_t seed = 1;
  int checkpoint_every = 0;  // steps between periodic checkpoints; 0 = final only

  // [sketch25d]
  int image_size = 64;
  int num_views = 12;          // 12 or 14
  int view_index = -1;         // -1 = slanted front view
  double lambda_depth = 1.0;
  double lambda_normal = 1.0;
  double lambda_mask = 1.0;
  double lambda_adv = 0.01;
  bool separate_decoders = false;
  double dropout_rate = 0.5;
  int steps_25d = 300;
  double lr_25d = 1e-3;
  double lr_disc = 1e-3;

  // [implicit]
  int decoder_layers = 5;  // 5 or 6
  std::vector<int> resolutions = {16, 32};
  int encoder_grid_n = 16;
  int steps_per_resolution = 400;
  int points_per_step = 1024;
  double w_surf = 4.0;
  bool invert_labels = false;
  double lr_implicit = 1e-3;
  int venc_steps = 400;
  double lr_venc = 1e-3;

  // [extract]
  int mesh_resolution = 32;
  double threshold = 0.5;
  int smooth_iterations = 0;

  // [eval]
  int eval_samples = 10000;

  void validate() const;

  // Hash over the fields that determine parameter shapes; stamped into
  // checkpoints so structurally incompatible configs fail loudly on load.
  uint64_t structural_hash() const;
};

// Parses the config file grammar; throws with file:line on any problem.
PipelineConfig load_pipeline_config(const std::string& path);

// Applies defaults when path is empty, otherwise loads and validates.
PipelineConfig resolve_config(const std::string& path, uint64_t seed_override,
                              bool has_seed_override);

}  // namespace s2m
