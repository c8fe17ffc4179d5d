#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "s2m/config.hpp"

namespace s2m {

// Thrown for malformed command invocations (exit code 2), as opposed to
// runtime failures (exit code 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested worker count (--threads / S2M_THREADS). The pipeline currently
// runs every stage on one logical thread so results are reproducible; the
// setting is recorded and validated but does not spawn workers.
void set_num_threads(int n);
int num_threads();

// Resolves the configured view index; -1 means the slanted-front default.
int resolve_view_index(const PipelineConfig& cfg);

struct GenSynthArgs {
  std::string out_dir;
  std::vector<std::string> shapes;  // subset of sphere, box, torus, capsule (repeats allowed)
};

struct Train25DArgs {
  std::string data_dir;
  std::string ckpt_out;
  bool resume = false;
};

struct TrainImplicitArgs {
  std::string data_dir;
  std::string ckpt_out;
  std::string maps_from_ckpt;  // optional stage-1 checkpoint: train the view
                               // encoder on predicted maps instead of rendered ones
  bool resume = false;
};

struct InferArgs {
  std::string sketch_path;
  std::string ckpt_25d;
  std::string ckpt_3d;
  std::string out_obj;
  std::string view_out;  // intermediate selected 2.5D map; default <out_obj>.selected.s2m25d
  int resolution = 0;    // 0 = config mesh_resolution
};

struct EvalArgs {
  std::string pred_obj;
  std::string gt_obj;
  std::string metric = "chamfer";  // chamfer | iou
  int samples = 0;                 // 0 = config eval_samples
  int resolution = 32;             // iou voxelization resolution
};

// All commands return a process exit code: 0 success, 3 empty-surface
// warning (infer only). Runtime failures throw; usage problems throw
// UsageError.
int cmd_gen_synth(const PipelineConfig& cfg, const GenSynthArgs& args);
int cmd_train_25d(const PipelineConfig& cfg, const Train25DArgs& args);
int cmd_train_implicit(const PipelineConfig& cfg, const TrainImplicitArgs& args);
int cmd_infer(const PipelineConfig& cfg, const InferArgs& args);
int cmd_eval(const PipelineConfig& cfg, const EvalArgs& args);

}  // namespace s2m
