#include "s2m/sketch25d.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "s2m/checkpoint.hpp"

namespace s2m {

namespace {

std::string enc_prefix(int l) { return "g.enc" + std::to_string(l); }

std::string dec_prefix(const Sketch25DConfig& cfg, int view) {
  return cfg.separate_decoders ? "g.dec" + std::to_string(view) + "." : "g.dec.";
}

// decoder conv input/output channels per upsample step
struct DecPlan {
  std::vector<int> in_ch, out_ch;

  DecPlan(const Sketch25DConfig& cfg) {
    const int L = cfg.levels();
    const auto ch = cfg.encoder_channels();
    int prev = ch.back();  // 512 bottleneck
    for (int s = 0; s < L; ++s) {
      const int skip = s < L - 1 ? ch[static_cast<size_t>(L - 2 - s)] : 1;  // last skip: the sketch
      const int out = s < L - 1 ? ch[static_cast<size_t>(L - 2 - s)] : 16;
      in_ch.push_back(prev + skip);
      out_ch.push_back(out);
      prev = out;
    }
  }
};

const std::vector<int> kDiscChannels = {8, 16, 32, 64};

int disc_flat(const Sketch25DConfig& cfg) {
  const int res = cfg.image_size >> static_cast<int>(kDiscChannels.size());
  return kDiscChannels.back() * res * res;
}

void ensure_decoder(ParamStore& ps, const Sketch25DConfig& cfg, const std::string& prefix,
                    Rng& rng) {
  DecPlan plan(cfg);
  for (size_t s = 0; s < plan.in_ch.size(); ++s) {
    const std::string p = prefix + "s" + std::to_string(s);
    ps.ensure(p + ".w", {plan.out_ch[s], plan.in_ch[s], 3, 3},
              glorot_init(rng, plan.in_ch[s] * 9, plan.out_ch[s] * 9));
    ps.ensure(p + ".b", {plan.out_ch[s]}, const_init(0.0));
  }
}

}  // namespace

void Sketch25DConfig::validate() const {
  if (image_size < 16 || (image_size & (image_size - 1)) != 0)
    throw std::runtime_error("sketch25d: image_size must be a power of two >= 16");
  if (num_views != 12 && num_views != 14)
    throw std::runtime_error("sketch25d: num_views must be 12 or 14");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::runtime_error("sketch25d: dropout_rate must be in [0,1)");
}

int Sketch25DConfig::levels() const {
  int l = 0, s = image_size;
  while (s > 2) {
    s /= 2;
    ++l;
  }
  return l;
}

std::vector<int> Sketch25DConfig::encoder_channels() const {
  std::vector<int> ch;
  for (int l = 0; l < levels() - 1; ++l) ch.push_back(std::min(16 << l, 256));
  ch.push_back(512);
  return ch;
}

void ensure_sketch25d(ParamStore& ps, const Sketch25DConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto ch = cfg.encoder_channels();
  int cin = 1;
  for (size_t l = 0; l < ch.size(); ++l) {
    ps.ensure(enc_prefix(static_cast<int>(l)) + ".w", {ch[l], cin, 4, 4},
              glorot_init(rng, cin * 16, ch[l] * 16));
    ps.ensure(enc_prefix(static_cast<int>(l)) + ".b", {ch[l]}, const_init(0.0));
    cin = ch[l];
  }
  if (cfg.separate_decoders) {
    for (int v = 0; v < cfg.num_views; ++v) ensure_decoder(ps, cfg, dec_prefix(cfg, v), rng);
  } else {
    ensure_decoder(ps, cfg, dec_prefix(cfg, 0), rng);
  }
  for (int v = 0; v < cfg.num_views; ++v) {
    const std::string p = "g.head" + std::to_string(v);
    ps.ensure(p + ".depth.w", {1, 16, 3, 3}, glorot_init(rng, 16 * 9, 9));
    ps.ensure(p + ".depth.b", {1}, const_init(0.0));
    ps.ensure(p + ".normal.w", {3, 16, 3, 3}, glorot_init(rng, 16 * 9, 27));
    ps.ensure(p + ".normal.b", {3}, const_init(0.0));
    ps.ensure(p + ".mask.w", {1, 16, 3, 3}, glorot_init(rng, 16 * 9, 9));
    ps.ensure(p + ".mask.b", {1}, const_init(0.0));
  }
  cin = 5;
  for (size_t l = 0; l < kDiscChannels.size(); ++l) {
    const int cout = kDiscChannels[l];
    ps.ensure("d.conv" + std::to_string(l) + ".w", {cout, cin, 4, 4},
              glorot_init(rng, cin * 16, cout * 16));
    ps.ensure("d.conv" + std::to_string(l) + ".b", {cout}, const_init(0.0));
    cin = cout;
  }
  ps.ensure("d.fc.w", {disc_flat(cfg), 1}, glorot_init(rng, disc_flat(cfg), 1));
  ps.ensure("d.fc.b", {1}, const_init(0.0));
}

std::vector<ViewPrediction> sketch25d_forward(Graph& g, const Sketch25DConfig& cfg,
                                              int sketch_node) {
  cfg.validate();
  const Tensor& in = g.value(sketch_node);
  if (in.rank() != 4 || in.dim(1) != 1 || in.dim(2) != cfg.image_size ||
      in.dim(3) != cfg.image_size)
    throw std::runtime_error("sketch25d_forward: sketch must be B x 1 x " +
                             std::to_string(cfg.image_size) + " x " +
                             std::to_string(cfg.image_size) + ", got " + shape_str(in.shape));
  const int L = cfg.levels();
  std::vector<int> skips;
  int x = sketch_node;
  for (int l = 0; l < L; ++l) {
    x = g.conv2d(x, enc_prefix(l) + ".w", enc_prefix(l) + ".b", 2, 1);
    if (l > 0) x = g.batchnorm(x, enc_prefix(l) + ".bn");
    x = g.leaky_relu(x, 0.2);
    skips.push_back(x);
  }
  // bottleneck is 512 x 2 x 2 by construction
  if (g.value(skips.back()).dim(1) != 512 || g.value(skips.back()).dim(2) != 2)
    throw std::runtime_error("sketch25d_forward: bottleneck is not 512 x 2 x 2");

  auto run_trunk = [&](const std::string& prefix) {
    int y = skips[static_cast<size_t>(L - 1)];
    for (int s = 0; s < L; ++s) {
      y = g.upsample2d_nearest(y, 2);
      const int skip = s < L - 1 ? skips[static_cast<size_t>(L - 2 - s)] : sketch_node;
      y = g.concat(y, skip);
      const std::string p = prefix + "s" + std::to_string(s);
      y = g.conv2d(y, p + ".w", p + ".b", 1, 1);
      y = g.leaky_relu(y, 0.2);
      if (s < 3) y = g.dropout(y, cfg.dropout_rate);
    }
    return y;
  };

  const int shared = cfg.separate_decoders ? -1 : run_trunk(dec_prefix(cfg, 0));
  std::vector<ViewPrediction> out;
  for (int v = 0; v < cfg.num_views; ++v) {
    const int feat = cfg.separate_decoders ? run_trunk(dec_prefix(cfg, v)) : shared;
    const std::string p = "g.head" + std::to_string(v);
    ViewPrediction pr;
    pr.depth = g.tanh_act(g.conv2d(feat, p + ".depth.w", p + ".depth.b", 1, 1));
    pr.normal = g.normalize_vec3(g.conv2d(feat, p + ".normal.w", p + ".normal.b", 1, 1));
    pr.mask = g.sigmoid(g.conv2d(feat, p + ".mask.w", p + ".mask.b", 1, 1));
    pr.fused = g.concat(pr.depth, g.concat(pr.normal, pr.mask));
    out.push_back(pr);
  }
  return out;
}

int discriminator_forward(Graph& g, const Sketch25DConfig& cfg, int maps_node) {
  const Tensor& in = g.value(maps_node);
  if (in.rank() != 4 || in.dim(1) != 5)
    throw std::runtime_error("discriminator_forward: input must be B x 5 x S x S");
  int x = maps_node;
  for (size_t l = 0; l < kDiscChannels.size(); ++l) {
    x = g.conv2d(x, "d.conv" + std::to_string(l) + ".w", "d.conv" + std::to_string(l) + ".b", 2, 1);
    x = g.leaky_relu(x, 0.2);
  }
  x = g.reshape(x, {in.dim(0), disc_flat(cfg)});
  return g.sigmoid(g.dense(x, "d.fc.w", "d.fc.b"));
}

Tensor view_map_to_tensor(const ViewMap25D& v) {
  const int64_t px = static_cast<int64_t>(v.size) * v.size;
  Tensor t({5, v.size, v.size});
  std::copy(v.depth.begin(), v.depth.end(), t.data.begin());
  std::copy(v.normal.begin(), v.normal.end(), t.data.begin() + px);
  std::copy(v.mask.begin(), v.mask.end(), t.data.begin() + 4 * px);
  return t;
}

ViewMap25D tensor_to_view_map(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 5 || t.dim(1) != t.dim(2))
    throw std::runtime_error("tensor_to_view_map: expected 5 x S x S, got " + shape_str(t.shape));
  const int s = t.dim(1);
  const int64_t px = static_cast<int64_t>(s) * s;
  ViewMap25D v;
  v.size = s;
  v.depth.assign(t.data.begin(), t.data.begin() + px);
  v.normal.assign(t.data.begin() + px, t.data.begin() + 4 * px);
  v.mask.assign(t.data.begin() + 4 * px, t.data.end());
  return v;
}

Tensor sketch_to_tensor(const std::vector<double>& img, int s) {
  if (static_cast<int64_t>(img.size()) != static_cast<int64_t>(s) * s)
    throw std::runtime_error("sketch_to_tensor: size mismatch");
  return Tensor({1, s, s}, img);
}

namespace {

struct GtBatch {
  Tensor sketches;            // B x 1 x S x S
  std::vector<Tensor> depth;  // per view, B x 1 x S x S
  std::vector<Tensor> normal; // per view, B x 3 x S x S
  std::vector<Tensor> mask;   // per view, B x 1 x S x S
  std::vector<Tensor> fused;  // per view, B x 5 x S x S
};

GtBatch make_batch(const Sketch25DConfig& cfg, const std::vector<TrainExample25D>& ds) {
  const int B = static_cast<int>(ds.size());
  const int S = cfg.image_size;
  const int64_t px = static_cast<int64_t>(S) * S;
  GtBatch b;
  b.sketches = Tensor({B, 1, S, S});
  for (int i = 0; i < B; ++i) {
    const auto& ex = ds[static_cast<size_t>(i)];
    if (ex.sketch.numel() != px || static_cast<int>(ex.views.size()) != cfg.num_views)
      throw std::runtime_error("train_25d: example shape mismatch");
    std::copy(ex.sketch.data.begin(), ex.sketch.data.end(),
              b.sketches.data.begin() + static_cast<int64_t>(i) * px);
  }
  for (int v = 0; v < cfg.num_views; ++v) {
    Tensor d({B, 1, S, S}), n({B, 3, S, S}), m({B, 1, S, S}), f({B, 5, S, S});
    for (int i = 0; i < B; ++i) {
      const Tensor& map = ds[static_cast<size_t>(i)].views[static_cast<size_t>(v)];
      if (map.rank() != 3 || map.dim(0) != 5 || map.dim(1) != S || map.dim(2) != S)
        throw std::runtime_error("train_25d: view map must be 5 x S x S");
      std::copy(map.data.begin(), map.data.begin() + px,
                d.data.begin() + static_cast<int64_t>(i) * px);
      std::copy(map.data.begin() + px, map.data.begin() + 4 * px,
                n.data.begin() + static_cast<int64_t>(i) * 3 * px);
      std::copy(map.data.begin() + 4 * px, map.data.end(),
                m.data.begin() + static_cast<int64_t>(i) * px);
      std::copy(map.data.begin(), map.data.end(),
                f.data.begin() + static_cast<int64_t>(i) * 5 * px);
    }
    b.depth.push_back(std::move(d));
    b.normal.push_back(std::move(n));
    b.mask.push_back(std::move(m));
    b.fused.push_back(std::move(f));
  }
  return b;
}

}  // namespace

std::vector<double> train_25d(ParamStore& ps, const std::vector<TrainExample25D>& dataset,
                              const Train25DConfig& cfg) {
  if (dataset.empty()) throw std::runtime_error("train_25d: empty dataset");
  cfg.model.validate();
  Rng rng(cfg.seed);
  ensure_sketch25d(ps, cfg.model, rng);
  const GtBatch batch = make_batch(cfg.model, dataset);
  const int V = cfg.model.num_views;

  std::vector<double> trace;
  trace.reserve(static_cast<size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    // generator step; the fakes it produces feed the discriminator step below
    ps.zero_grad();
    std::vector<Tensor> fakes;
    double gen_loss = 0;
    {
      Graph g(&ps, Graph::Mode::kTrain, &rng);
      const int sk = g.input(batch.sketches);
      const auto preds = sketch25d_forward(g, cfg.model, sk);
      std::vector<std::pair<int, double>> terms;
      for (int v = 0; v < V; ++v) {
        const int gtm = g.input(batch.mask[static_cast<size_t>(v)]);
        terms.emplace_back(
            g.masked_l1_sum(preds[static_cast<size_t>(v)].depth,
                            g.input(batch.depth[static_cast<size_t>(v)]), gtm),
            cfg.model.lambda_depth);
        terms.emplace_back(
            g.masked_cosine_sum(preds[static_cast<size_t>(v)].normal,
                                g.input(batch.normal[static_cast<size_t>(v)]), gtm),
            cfg.model.lambda_normal);
        terms.emplace_back(g.bce_sum(preds[static_cast<size_t>(v)].mask, gtm),
                           cfg.model.lambda_mask);
        if (cfg.model.lambda_adv != 0.0) {
          const int df = discriminator_forward(g, cfg.model, preds[static_cast<size_t>(v)].fused);
          terms.emplace_back(g.gan_generator_loss(df), cfg.model.lambda_adv);
        }
        fakes.push_back(g.value(preds[static_cast<size_t>(v)].fused));  // detached copy
      }
      const int total = g.weighted_sum(terms);
      g.backward(total);
      gen_loss = g.value(total)[0];
      adam_step_prefixes(ps, cfg.gen_adam, {"g."});
    }

    // discriminator step on detached fakes vs ground truth
    if (cfg.model.lambda_adv != 0.0) {
      ps.zero_grad();
      Graph g(&ps, Graph::Mode::kTrain, &rng);
      std::vector<std::pair<int, double>> terms;
      for (int v = 0; v < V; ++v) {
        const int dr =
            discriminator_forward(g, cfg.model, g.input(batch.fused[static_cast<size_t>(v)]));
        const int df = discriminator_forward(g, cfg.model, g.input(fakes[static_cast<size_t>(v)]));
        terms.emplace_back(g.gan_discriminator_loss(dr, df), 1.0);
      }
      const int total = g.weighted_sum(terms);
      g.backward(total);
      adam_step_prefixes(ps, cfg.disc_adam, {"d."});
    }

    trace.push_back(gen_loss);
    if (cfg.on_step) cfg.on_step(step, gen_loss);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(ps, cfg.checkpoint_path, cfg.config_hash);
  }
  return trace;
}

Eval25D evaluate_25d(ParamStore& ps, const Sketch25DConfig& cfg,
                     const std::vector<TrainExample25D>& dataset) {
  if (dataset.empty()) throw std::runtime_error("evaluate_25d: empty dataset");
  const GtBatch batch = make_batch(cfg, dataset);
  Graph g(&ps, Graph::Mode::kEval);
  const auto preds = sketch25d_forward(g, cfg, g.input(batch.sketches));

  Eval25D r;
  double depth_l1 = 0, angle_sum = 0, bce = 0;
  int64_t px_total = 0;
  for (int v = 0; v < cfg.num_views; ++v) {
    const Tensor& pd = g.value(preds[static_cast<size_t>(v)].depth);
    const Tensor& pn = g.value(preds[static_cast<size_t>(v)].normal);
    const Tensor& pm = g.value(preds[static_cast<size_t>(v)].mask);
    const Tensor& td = batch.depth[static_cast<size_t>(v)];
    const Tensor& tn = batch.normal[static_cast<size_t>(v)];
    const Tensor& tm = batch.mask[static_cast<size_t>(v)];
    const int B = pd.dim(0);
    const int64_t hw = static_cast<int64_t>(pd.dim(2)) * pd.dim(3);
    px_total += B * hw;
    for (int b = 0; b < B; ++b) {
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t p1 = static_cast<int64_t>(b) * hw + i;
        const int64_t p3 = static_cast<int64_t>(b) * 3 * hw + i;
        const double mk = tm[p1];
        const double q = std::clamp(pm[p1], 1e-7, 1.0 - 1e-7);
        bce += -(mk * std::log(q) + (1.0 - mk) * std::log(1.0 - q));
        if (mk <= 0.5) continue;
        r.foreground_pixels += 1;
        depth_l1 += std::abs(pd[p1] - td[p1]);
        const double dot = std::clamp(pn[p3] * tn[p3] + pn[p3 + hw] * tn[p3 + hw] +
                                          pn[p3 + 2 * hw] * tn[p3 + 2 * hw],
                                      -1.0, 1.0);
        angle_sum += std::acos(dot) * 180.0 / 3.14159265358979323846;
      }
    }
  }
  if (r.foreground_pixels > 0) {
    r.depth_l1_per_fg_pixel = depth_l1 / static_cast<double>(r.foreground_pixels);
    r.normal_angle_deg_mean = angle_sum / static_cast<double>(r.foreground_pixels);
  }
  r.mask_bce_per_pixel = px_total > 0 ? bce / static_cast<double>(px_total) : 0.0;
  return r;
}

std::vector<ViewMap25D> predict_views(ParamStore& ps, const Sketch25DConfig& cfg,
                                      const std::vector<double>& sketch, int size) {
  if (size != cfg.image_size) throw std::runtime_error("predict_views: sketch size mismatch");
  Tensor in({1, 1, size, size}, sketch);
  Graph g(&ps, Graph::Mode::kEval);
  const auto preds = sketch25d_forward(g, cfg, g.input(std::move(in)));
  std::vector<ViewMap25D> out;
  for (const auto& p : preds) {
    const Tensor& f = g.value(p.fused);
    out.push_back(tensor_to_view_map(Tensor({5, size, size}, f.data)));
  }
  return out;
}

}  // namespace s2m
