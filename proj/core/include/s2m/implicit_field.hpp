#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s2m/camera.hpp"
#include "s2m/geometry.hpp"
#include "s2m/graph.hpp"
#include "s2m/marching_cubes.hpp"

namespace s2m {

// Voxel-center point samples with occupancy labels and per-point weights.
// Labels use inside = 1; boundary-adjacent voxels (any of the 6 face
// neighbors differs) get weight w_surf, interior/exterior weight 1.
struct PointValueSet {
  Tensor points;   // N x 3, coordinates in [0,1]^3
  Tensor labels;   // N x 1, {0,1}
  Tensor weights;  // N x 1, > 0
  int source_n = 0;

  int64_t count() const { return points.dim(0); }
};

PointValueSet sample_point_values(const VoxelGrid& grid, double w_surf = 4.0,
                                  bool invert_labels = false);

struct ImplicitDecoderConfig {
  int num_fc_layers = 5;                      // 5 (extended) or 6 (original, ablation)
  std::vector<int> hidden = {512, 512, 256, 128};  // widths between input and the sigmoid head
  int latent_dim = 128;

  // 6-layer variant prepends an extra 512-wide layer
  std::vector<int> layer_widths() const;
  int64_t param_count() const;
};

// Registers decoder parameters ("imdec.fcK.{w,b}") if absent.
void ensure_implicit_decoder(ParamStore& ps, const ImplicitDecoderConfig& cfg, Rng& rng);

// Builds the decoder on an existing graph; `points_node` is N x 3 and
// `latent_node` is 1 x latent_dim (broadcast over the points) or N x latent_dim.
int implicit_decoder_forward(Graph& g, const ImplicitDecoderConfig& cfg, int latent_node,
                             int points_node);

// Pure evaluation path (eval mode, no tape kept by the caller).
std::vector<double> implicit_forward(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                                     const std::vector<double>& latent, const Tensor& points);

// Weighted-MSE occupancy loss, evaluated outside any training loop.
double implicit_loss_value(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                           const std::vector<double>& latent, const PointValueSet& pvs);

struct ImplicitTrainConfig {
  ImplicitDecoderConfig decoder;
  std::vector<int> resolutions = {16, 32};  // ascending curriculum
  int encoder_grid_n = 16;                  // input resolution of the 3D conv encoder
  int steps_per_resolution = 400;
  int points_per_step = 1024;               // subsampled per step; 0 = all
  double w_surf = 4.0;
  bool invert_labels = false;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  uint64_t seed = 1;
  int checkpoint_every = 0;                 // 0 = off
  std::string checkpoint_path;
  uint64_t config_hash = 0;                 // stamped into periodic checkpoints
  std::function<void(int, double)> on_step; // step index, loss
};

struct ImplicitTrainResult {
  std::vector<double> loss_trace;
  // latent code per input grid, in input order
  std::vector<std::vector<double>> latents;
};

// Jointly trains the 3D conv encoder ("imenc.*") and the implicit decoder
// over the resolution curriculum; stores per-shape latents under
// "latent/<shape_id>".
ImplicitTrainResult pretrain_autoencoder(ParamStore& ps, const std::vector<VoxelGrid>& grids,
                                         const std::vector<std::string>& shape_ids,
                                         const ImplicitTrainConfig& cfg);

// Encodes one grid with the trained 3D encoder.
std::vector<double> encode_grid(ParamStore& ps, const VoxelGrid& grid);

// Re-optimizes only a latent code against the frozen decoder (auto-decoding).
std::vector<double> optimize_latent(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                                    const PointValueSet& pvs, int steps, double lr, uint64_t seed);

struct ViewEncoderTrainConfig {
  int image_size = 64;
  int in_channels = 5;  // selected 2.5D view; 1 for raw-sketch mode
  int steps = 400;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  uint64_t seed = 2;
  std::function<void(int, double)> on_step;
};

// Residual-block conv encoder ("venc.*") regressing 2.5D maps to the frozen
// ground-truth latents. The decoder store entries are untouched bit-exactly.
std::vector<double> train_singleview_encoder(ParamStore& ps,
                                             const std::vector<Tensor>& maps,      // C x S x S each
                                             const std::vector<std::vector<double>>& target_latents,
                                             const ViewEncoderTrainConfig& cfg);

std::vector<double> encode_view(ParamStore& ps, const Tensor& map /* C x S x S */);

// Field sampled at voxel centers; deterministic, chunk-batched.
ScalarField evaluate_grid(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                          const std::vector<double>& latent, int n);

struct ExtractOptions {
  double threshold = 0.5;
  int smooth_iterations = 0;  // optional Laplacian pass, off by default
};

TriMesh extract_mesh(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                     const std::vector<double>& latent, int resolution, const ExtractOptions& opt);

}  // namespace s2m
