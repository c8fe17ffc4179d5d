#include "s2m/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "s2m/checkpoint.hpp"
#include "s2m/dataset.hpp"
#include "s2m/implicit_field.hpp"
#include "s2m/marching_cubes.hpp"
#include "s2m/metrics.hpp"
#include "s2m/sketch25d.hpp"

namespace s2m {

namespace {

int g_num_threads = 1;

Sketch25DConfig stage1_config(const PipelineConfig& c) {
  Sketch25DConfig m;
  m.image_size = c.image_size;
  m.num_views = c.num_views;
  m.lambda_depth = c.lambda_depth;
  m.lambda_normal = c.lambda_normal;
  m.lambda_mask = c.lambda_mask;
  m.lambda_adv = c.lambda_adv;
  m.dropout_rate = c.dropout_rate;
  m.separate_decoders = c.separate_decoders;
  return m;
}

ImplicitDecoderConfig decoder_config(const PipelineConfig& c) {
  ImplicitDecoderConfig d;
  d.num_fc_layers = c.decoder_layers;
  return d;
}

void write_trace(const std::vector<double>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace: " + path);
  char buf[64];
  for (double v : trace) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
}

// Loads a checkpoint and verifies it was produced under a structurally
// compatible config.
uint64_t load_checked(ParamStore& ps, const std::string& path, const PipelineConfig& cfg) {
  const uint64_t hash = load_checkpoint(ps, path);
  if (hash != cfg.structural_hash())
    throw std::runtime_error("checkpoint " + path +
                             " was produced under a structurally different config");
  return hash;
}

}  // namespace

void set_num_threads(int n) {
  if (n < 1) throw UsageError("--threads must be >= 1");
  g_num_threads = n;
}

int num_threads() { return g_num_threads; }

int resolve_view_index(const PipelineConfig& cfg) {
  if (cfg.view_index >= 0) return cfg.view_index;
  const auto views = icosahedron_viewpoints(
      cfg.num_views == 14 ? ViewpointCount::kFourteen : ViewpointCount::kTwelve, 0.5,
      cfg.image_size);
  return default_front_view_index(views);
}

int cmd_gen_synth(const PipelineConfig& cfg, const GenSynthArgs& args) {
  if (args.out_dir.empty()) throw UsageError("gen-synth: --out is required");
  if (args.shapes.empty()) throw UsageError("gen-synth: --shapes is required");
  GenSynthOptions opt;
  opt.shapes = args.shapes;
  opt.num_views = cfg.num_views;
  opt.image_size = cfg.image_size;
  opt.seed = cfg.seed;
  std::set<int> res(cfg.resolutions.begin(), cfg.resolutions.end());
  res.insert(cfg.encoder_grid_n);
  opt.vox_resolutions.assign(res.begin(), res.end());
  const auto ids = generate_synthetic_dataset(args.out_dir, opt);
  std::printf("gen-synth: wrote %zu shapes, %d views each, to %s\n", ids.size(), cfg.num_views,
              args.out_dir.c_str());
  return 0;
}

int cmd_train_25d(const PipelineConfig& cfg, const Train25DArgs& args) {
  if (args.data_dir.empty() || args.ckpt_out.empty())
    throw UsageError("train-25d: --data and --ckpt-out are required");
  const int view = resolve_view_index(cfg);
  const auto examples =
      load_train25d_examples(args.data_dir, cfg.image_size, cfg.num_views, view);

  ParamStore ps;
  if (args.resume) load_checked(ps, args.ckpt_out, cfg);

  Train25DConfig tc;
  tc.model = stage1_config(cfg);
  tc.steps = cfg.steps_25d;
  tc.gen_adam.lr = cfg.lr_25d;
  tc.disc_adam.lr = cfg.lr_disc;
  tc.seed = cfg.seed;
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.checkpoint_path = args.ckpt_out;
  tc.config_hash = cfg.structural_hash();
  const auto trace = train_25d(ps, examples, tc);
  save_checkpoint(ps, args.ckpt_out, cfg.structural_hash());
  write_trace(trace, args.ckpt_out + ".loss.txt");

  const Eval25D ev = evaluate_25d(ps, tc.model, examples);
  std::printf("train-25d: steps=%d shapes=%zu view=%d params=%lld final_loss=%.6g "
              "depth_l1=%.6g normal_deg=%.6g\n",
              cfg.steps_25d, examples.size(), view,
              static_cast<long long>(ps.total_param_count()),
              trace.empty() ? 0.0 : trace.back(), ev.depth_l1_per_fg_pixel,
              ev.normal_angle_deg_mean);
  return 0;
}

int cmd_train_implicit(const PipelineConfig& cfg, const TrainImplicitArgs& args) {
  if (args.data_dir.empty() || args.ckpt_out.empty())
    throw UsageError("train-implicit: --data and --ckpt-out are required");
  const auto ids = read_manifest(args.data_dir);
  std::vector<VoxelGrid> grids;
  for (const auto& id : ids)
    grids.push_back(load_voxels(vox_path(args.data_dir, id, cfg.encoder_grid_n)));

  ParamStore ps;
  if (args.resume) load_checked(ps, args.ckpt_out, cfg);

  ImplicitTrainConfig tc;
  tc.decoder = decoder_config(cfg);
  tc.resolutions = cfg.resolutions;
  tc.encoder_grid_n = cfg.encoder_grid_n;
  tc.steps_per_resolution = cfg.steps_per_resolution;
  tc.points_per_step = cfg.points_per_step;
  tc.w_surf = cfg.w_surf;
  tc.invert_labels = cfg.invert_labels;
  tc.adam.lr = cfg.lr_implicit;
  tc.seed = cfg.seed;
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.checkpoint_path = args.ckpt_out;
  tc.config_hash = cfg.structural_hash();
  const auto result = pretrain_autoencoder(ps, grids, ids, tc);
  write_trace(result.loss_trace, args.ckpt_out + ".ae.loss.txt");
  std::printf("train-implicit: decoder_layers=%d decoder_params=%lld ae_final_loss=%.6g\n",
              cfg.decoder_layers, static_cast<long long>(tc.decoder.param_count()),
              result.loss_trace.empty() ? 0.0 : result.loss_trace.back());

  // single-view latent regression on the selected view
  const int view = resolve_view_index(cfg);
  std::vector<Tensor> maps;
  if (args.maps_from_ckpt.empty()) {
    for (const auto& id : ids)
      maps.push_back(view_map_to_tensor(load_view25d(view_path(args.data_dir, id, view))));
  } else {
    ParamStore ps25;
    load_checked(ps25, args.maps_from_ckpt, cfg);
    const Sketch25DConfig m25 = stage1_config(cfg);
    for (const auto& id : ids) {
      int s = 0;
      const auto sketch = load_sketch(sketch_path(args.data_dir, id, view), &s);
      const auto predicted = predict_views(ps25, m25, sketch, s);
      maps.push_back(view_map_to_tensor(predicted[static_cast<size_t>(view)]));
    }
  }
  ViewEncoderTrainConfig vc;
  vc.image_size = cfg.image_size;
  vc.in_channels = 5;
  vc.steps = cfg.venc_steps;
  vc.adam.lr = cfg.lr_venc;
  vc.seed = cfg.seed + 1;
  const auto venc_trace = train_singleview_encoder(ps, maps, result.latents, vc);
  write_trace(venc_trace, args.ckpt_out + ".venc.loss.txt");

  save_checkpoint(ps, args.ckpt_out, cfg.structural_hash());
  std::printf("train-implicit: venc_steps=%d venc_final_loss=%.6g total_params=%lld\n",
              cfg.venc_steps, venc_trace.empty() ? 0.0 : venc_trace.back(),
              static_cast<long long>(ps.total_param_count()));
  return 0;
}

int cmd_infer(const PipelineConfig& cfg, const InferArgs& args) {
  if (args.sketch_path.empty() || args.ckpt_25d.empty() || args.ckpt_3d.empty() ||
      args.out_obj.empty())
    throw UsageError("infer: --sketch, --ckpt-25d, --ckpt-3d and --out are required");

  int s = 0;
  const auto sketch = load_sketch(args.sketch_path, &s);
  if (s != cfg.image_size)
    throw std::runtime_error("sketch size " + std::to_string(s) +
                             " does not match configured image_size " +
                             std::to_string(cfg.image_size));

  ParamStore ps25;
  load_checked(ps25, args.ckpt_25d, cfg);
  const auto maps = predict_views(ps25, stage1_config(cfg), sketch, s);
  const int view = resolve_view_index(cfg);
  const std::string view_out =
      args.view_out.empty() ? args.out_obj + ".selected.s2m25d" : args.view_out;
  ViewMap25D selected = maps[static_cast<size_t>(view)];
  selected.viewpoint = icosahedron_viewpoints(
      cfg.num_views == 14 ? ViewpointCount::kFourteen : ViewpointCount::kTwelve, 0.5,
      cfg.image_size)[static_cast<size_t>(view)];
  save_view25d(selected, view_out);

  ParamStore ps3d;
  load_checked(ps3d, args.ckpt_3d, cfg);
  const std::vector<double> latent = encode_view(ps3d, view_map_to_tensor(selected));

  const int resolution = args.resolution > 0 ? args.resolution : cfg.mesh_resolution;
  ExtractOptions opt;
  opt.threshold = cfg.threshold;
  opt.smooth_iterations = cfg.smooth_iterations;
  const TriMesh mesh = extract_mesh(ps3d, decoder_config(cfg), latent, resolution, opt);
  save_obj(mesh, args.out_obj);
  if (mesh.empty()) {
    std::fprintf(stderr, "infer: warning: field has no surface at threshold %g; wrote empty OBJ\n",
                 cfg.threshold);
    return 3;
  }
  std::printf("infer: view=%d resolution=%d vertices=%zu faces=%zu -> %s\n", view, resolution,
              mesh.vertices.size(), mesh.faces.size(), args.out_obj.c_str());
  return 0;
}

int cmd_eval(const PipelineConfig& cfg, const EvalArgs& args) {
  if (args.pred_obj.empty() || args.gt_obj.empty())
    throw UsageError("eval: --pred and --gt are required");
  const TriMesh pred = load_obj(args.pred_obj);
  const TriMesh gt = load_obj(args.gt_obj);
  if (args.metric == "chamfer") {
    const int samples = args.samples > 0 ? args.samples : cfg.eval_samples;
    const EvalReport r = chamfer_mesh(pred, gt, samples, cfg.seed);
    std::printf("%s\n", r.line().c_str());
    return 0;
  }
  if (args.metric == "iou") {
    if (args.resolution < 2) throw UsageError("eval: --resolution must be >= 2 for iou");
    EvalReport r;
    r.metric = "voxel_iou";
    r.value = voxel_iou(voxelize(pred, args.resolution), voxelize(gt, args.resolution));
    r.samples = args.resolution;
    r.seed = cfg.seed;
    std::printf("%s\n", r.line().c_str());
    return 0;
  }
  throw UsageError("eval: unknown metric '" + args.metric + "' (expected chamfer or iou)");
}

}  // namespace s2m
