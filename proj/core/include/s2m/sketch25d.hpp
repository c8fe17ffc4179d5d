#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s2m/camera.hpp"
#include "s2m/graph.hpp"

namespace s2m {

// Stage-1 network: a single sketch in, V five-channel 2.5D maps out, trained
// with masked depth/normal terms, a mask cross-entropy and a per-view
// adversarial term.
struct Sketch25DConfig {
  int image_size = 64;  // power of two >= 16
  int num_views = 12;   // 12 or 14
  double lambda_depth = 1.0;
  double lambda_normal = 1.0;
  double lambda_mask = 1.0;
  double lambda_adv = 0.01;
  double dropout_rate = 0.5;       // first 3 decoder convs
  bool separate_decoders = false;  // per-view decoder trunks instead of shared trunk + heads

  void validate() const;
  // stride-2 encoder levels down to a 2x2 bottleneck: log2(image_size) - 1
  int levels() const;
  // per-level output channels; the bottleneck level is 512 wide
  std::vector<int> encoder_channels() const;
};

// Registers generator ("g.*") and discriminator ("d.*") parameters if absent.
void ensure_sketch25d(ParamStore& ps, const Sketch25DConfig& cfg, Rng& rng);

struct ViewPrediction {
  int depth = -1;   // B x 1 x S x S, tanh
  int normal = -1;  // B x 3 x S x S, unit length per pixel
  int mask = -1;    // B x 1 x S x S, sigmoid
  int fused = -1;   // B x 5 x S x S, channel order depth, nx, ny, nz, mask
};

// Builds the generator on an existing graph. `sketch_node` is B x 1 x S x S
// with values in [0,1]. Returns one prediction per viewpoint.
std::vector<ViewPrediction> sketch25d_forward(Graph& g, const Sketch25DConfig& cfg,
                                              int sketch_node);

// Per-view realness probability for a 5-channel map batch: B x 5 x S x S -> B x 1.
int discriminator_forward(Graph& g, const Sketch25DConfig& cfg, int maps_node);

// ---- 2.5D map <-> tensor plumbing ----
Tensor view_map_to_tensor(const ViewMap25D& v);                 // 5 x S x S
ViewMap25D tensor_to_view_map(const Tensor& t);                 // mask left soft
Tensor sketch_to_tensor(const std::vector<double>& img, int s); // 1 x S x S

struct TrainExample25D {
  Tensor sketch;              // 1 x S x S
  std::vector<Tensor> views;  // num_views entries, 5 x S x S each
};

struct Train25DConfig {
  Sketch25DConfig model;
  int steps = 300;
  AdamConfig gen_adam{1e-3, 0.9, 0.999, 1e-8};
  AdamConfig disc_adam{1e-3, 0.9, 0.999, 1e-8};
  uint64_t seed = 3;
  int checkpoint_every = 0;  // 0 = off
  std::string checkpoint_path;
  uint64_t config_hash = 0;  // stamped into periodic checkpoints
  std::function<void(int, double)> on_step;  // step index, generator loss
};

// Alternating 1:1 generator/discriminator updates over full-batch steps.
// Returns the generator loss trace.
std::vector<double> train_25d(ParamStore& ps, const std::vector<TrainExample25D>& dataset,
                              const Train25DConfig& cfg);

// Supervised-term diagnostics on a dataset (eval mode, means for reporting).
struct Eval25D {
  double depth_l1_per_fg_pixel = 0;   // masked L1 / foreground pixel count
  double normal_angle_deg_mean = 0;   // mean angular error over foreground
  double mask_bce_per_pixel = 0;
  int64_t foreground_pixels = 0;
};

Eval25D evaluate_25d(ParamStore& ps, const Sketch25DConfig& cfg,
                     const std::vector<TrainExample25D>& dataset);

// Runs the generator in eval mode on one sketch; returns num_views maps.
std::vector<ViewMap25D> predict_views(ParamStore& ps, const Sketch25DConfig& cfg,
                                      const std::vector<double>& sketch, int size);

}  // namespace s2m
