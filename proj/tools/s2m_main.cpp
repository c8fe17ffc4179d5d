#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "s2m/pipeline.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"SingleSketch2Mesh pipeline: sketch -> 2.5D maps -> implicit field -> mesh"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  bool has_seed = false;
  int threads = 0;
  app.add_option("--config", config_path, "pipeline config file (key = value with [sections])")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides the config seed")->each([&](const std::string&) {
    has_seed = true;
  });
  app.add_option("--threads", threads, "worker count (default: S2M_THREADS or 1)");

  s2m::GenSynthArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
  cmd_gen->add_option("--out", gen.out_dir, "output dataset directory")->required();
  cmd_gen->add_option("--shapes", gen.shapes,
                      "shape kinds (sphere, box, torus, capsule; repeats allowed)")
      ->required()
      ->delimiter(',');

  s2m::Train25DArgs t25;
  auto* cmd_t25 = app.add_subcommand("train-25d", "train the sketch -> 2.5D network");
  cmd_t25->add_option("--data", t25.data_dir, "dataset directory")->required();
  cmd_t25->add_option("--ckpt-out", t25.ckpt_out, "checkpoint output path")->required();
  cmd_t25->add_flag("--resume", t25.resume, "continue from an existing checkpoint");
  bool separate_decoders = false;
  cmd_t25->add_flag("--separate-decoders", separate_decoders,
                    "per-view decoder trunks instead of a shared trunk with view heads");

  s2m::TrainImplicitArgs tim;
  auto* cmd_tim =
      app.add_subcommand("train-implicit", "train the implicit autoencoder and view encoder");
  cmd_tim->add_option("--data", tim.data_dir, "dataset directory")->required();
  cmd_tim->add_option("--ckpt-out", tim.ckpt_out, "checkpoint output path")->required();
  cmd_tim->add_option("--maps-from", tim.maps_from_ckpt,
                      "stage-1 checkpoint; train the view encoder on its predicted maps");
  cmd_tim->add_flag("--resume", tim.resume, "continue from an existing checkpoint");
  int decoder_layers = 0;
  cmd_tim->add_option("--decoder-layers", decoder_layers, "implicit decoder depth (5 or 6)");

  s2m::InferArgs inf;
  auto* cmd_inf = app.add_subcommand("infer", "sketch to mesh");
  cmd_inf->add_option("--sketch", inf.sketch_path, "input sketch (.s2mskt)")->required();
  cmd_inf->add_option("--ckpt-25d", inf.ckpt_25d, "stage-1 checkpoint")->required();
  cmd_inf->add_option("--ckpt-3d", inf.ckpt_3d, "stage-2 checkpoint")->required();
  cmd_inf->add_option("--out", inf.out_obj, "output OBJ path")->required();
  cmd_inf->add_option("--view-out", inf.view_out, "intermediate selected 2.5D map path");
  cmd_inf->add_option("--resolution", inf.resolution, "marching-cubes grid resolution");

  s2m::EvalArgs ev;
  auto* cmd_ev = app.add_subcommand("eval", "compare two meshes");
  cmd_ev->add_option("--pred", ev.pred_obj, "predicted mesh (OBJ)")->required();
  cmd_ev->add_option("--gt", ev.gt_obj, "ground-truth mesh (OBJ)")->required();
  cmd_ev->add_option("--metric", ev.metric, "chamfer or iou");
  cmd_ev->add_option("--samples", ev.samples, "surface samples per mesh (chamfer)");
  cmd_ev->add_option("--resolution", ev.resolution, "voxel resolution (iou)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, any parse problem is a usage error
  }

  try {
    if (threads == 0) {
      const char* env = std::getenv("S2M_THREADS");
      threads = env != nullptr ? std::atoi(env) : 1;
      if (threads <= 0) threads = 1;
    }
    s2m::set_num_threads(threads);

    s2m::PipelineConfig cfg = s2m::resolve_config(config_path, seed, has_seed);
    if (cmd_t25->parsed() && separate_decoders) cfg.separate_decoders = true;
    if (cmd_tim->parsed() && decoder_layers != 0) {
      cfg.decoder_layers = decoder_layers;
      cfg.validate();
    }

    if (cmd_gen->parsed()) return s2m::cmd_gen_synth(cfg, gen);
    if (cmd_t25->parsed()) return s2m::cmd_train_25d(cfg, t25);
    if (cmd_tim->parsed()) return s2m::cmd_train_implicit(cfg, tim);
    if (cmd_inf->parsed()) return s2m::cmd_infer(cfg, inf);
    if (cmd_ev->parsed()) return s2m::cmd_eval(cfg, ev);
    std::fprintf(stderr, "error: no command given\n");
    return 2;
  } catch (const s2m::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
