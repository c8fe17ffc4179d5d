#include "s2m/implicit_field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "s2m/checkpoint.hpp"

namespace s2m {

namespace {

constexpr int kLatentDim = 128;

// 3D conv encoder schedule: stride-2 levels from encoder_grid_n down to 4,
// then a dense layer to the latent.
struct VoxEncoderPlan {
  std::vector<int> channels;
  int flat = 0;

  explicit VoxEncoderPlan(int n) {
    int res = n, ch = 16;
    while (res > 4) {
      channels.push_back(ch);
      ch = std::min(ch * 2, 128);
      res /= 2;
    }
    flat = (channels.empty() ? 1 : channels.back()) * res * res * res;
  }
};

void ensure_vox_encoder(ParamStore& ps, int n, Rng& rng) {
  VoxEncoderPlan plan(n);
  int cin = 1;
  for (size_t l = 0; l < plan.channels.size(); ++l) {
    const int cout = plan.channels[l];
    ps.ensure("imenc.conv" + std::to_string(l) + ".w", {cout, cin, 4, 4, 4},
              glorot_init(rng, cin * 64, cout * 64));
    ps.ensure("imenc.conv" + std::to_string(l) + ".b", {cout}, const_init(0.0));
    cin = cout;
  }
  ps.ensure("imenc.fc.w", {plan.flat, kLatentDim}, glorot_init(rng, plan.flat, kLatentDim));
  ps.ensure("imenc.fc.b", {kLatentDim}, const_init(0.0));
}

int vox_encoder_forward(Graph& g, int grid_node, int n) {
  VoxEncoderPlan plan(n);
  int x = grid_node;  // B x 1 x n x n x n
  for (size_t l = 0; l < plan.channels.size(); ++l) {
    x = g.conv3d(x, "imenc.conv" + std::to_string(l) + ".w",
                 "imenc.conv" + std::to_string(l) + ".b", 2, 1);
    x = g.leaky_relu(x, 0.2);
  }
  const int B = g.value(x).dim(0);
  x = g.reshape(x, {B, plan.flat});
  return g.dense(x, "imenc.fc.w", "imenc.fc.b");  // B x 128
}

// Residual-block 2.5D-map encoder: stem conv, then stride-2 stages each
// followed by an additive two-conv residual block, then dense to the latent.
struct ViewEncoderPlan {
  std::vector<int> channels;
  int flat = 0;

  ViewEncoderPlan(int image_size) {
    int res = image_size, ch = 16;
    while (res > 4) {
      channels.push_back(ch);
      ch = std::min(ch * 2, 128);
      res /= 2;
    }
    flat = (channels.empty() ? 1 : channels.back()) * res * res;
  }
};

void ensure_view_encoder(ParamStore& ps, int image_size, int in_channels, Rng& rng) {
  ViewEncoderPlan plan(image_size);
  int cin = in_channels;
  for (size_t l = 0; l < plan.channels.size(); ++l) {
    const int cout = plan.channels[l];
    const std::string p = "venc.stage" + std::to_string(l);
    ps.ensure(p + ".down.w", {cout, cin, 4, 4}, glorot_init(rng, cin * 16, cout * 16));
    ps.ensure(p + ".down.b", {cout}, const_init(0.0));
    ps.ensure(p + ".res1.w", {cout, cout, 3, 3}, glorot_init(rng, cout * 9, cout * 9));
    ps.ensure(p + ".res1.b", {cout}, const_init(0.0));
    ps.ensure(p + ".res2.w", {cout, cout, 3, 3}, glorot_init(rng, cout * 9, cout * 9));
    ps.ensure(p + ".res2.b", {cout}, const_init(0.0));
    cin = cout;
  }
  ps.ensure("venc.fc.w", {plan.flat, kLatentDim}, glorot_init(rng, plan.flat, kLatentDim));
  ps.ensure("venc.fc.b", {kLatentDim}, const_init(0.0));
}

int view_encoder_forward(Graph& g, int x, int image_size) {
  ViewEncoderPlan plan(image_size);
  for (size_t l = 0; l < plan.channels.size(); ++l) {
    const std::string p = "venc.stage" + std::to_string(l);
    x = g.conv2d(x, p + ".down.w", p + ".down.b", 2, 1);
    x = g.leaky_relu(x, 0.2);
    int r = g.conv2d(x, p + ".res1.w", p + ".res1.b", 1, 1);
    r = g.leaky_relu(r, 0.2);
    r = g.conv2d(r, p + ".res2.w", p + ".res2.b", 1, 1);
    x = g.leaky_relu(g.add(x, r), 0.2);  // identity shortcut
  }
  const int B = g.value(x).dim(0);
  x = g.reshape(x, {B, plan.flat});
  return g.dense(x, "venc.fc.w", "venc.fc.b");
}

Tensor grid_to_tensor(const VoxelGrid& grid) {
  Tensor t({1, 1, grid.n, grid.n, grid.n});
  for (size_t i = 0; i < grid.occupancy.size(); ++i)
    t[static_cast<int64_t>(i)] = grid.occupancy[i] ? 1.0 : 0.0;
  return t;
}

Tensor broadcast_latent(const std::vector<double>& latent, int64_t rows) {
  Tensor t({static_cast<int>(rows), static_cast<int>(latent.size())});
  for (int64_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < latent.size(); ++c)
      t[r * static_cast<int64_t>(latent.size()) + static_cast<int64_t>(c)] = latent[c];
  return t;
}

// Nearest-voxel upsample of occupancy labels to a finer sampling resolution.
VoxelGrid regrid_occupancy(const VoxelGrid& src, int n) {
  if (src.n == n) return src;
  VoxelGrid up(n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3 c = up.center(i, j, k);
        const int gi = std::min(src.n - 1, static_cast<int>(c.x * src.n));
        const int gj = std::min(src.n - 1, static_cast<int>(c.y * src.n));
        const int gk = std::min(src.n - 1, static_cast<int>(c.z * src.n));
        up.set(i, j, k, src.at(gi, gj, gk));
      }
  return up;
}

}  // namespace

PointValueSet sample_point_values(const VoxelGrid& grid, double w_surf, bool invert_labels) {
  const int n = grid.n;
  const int64_t total = static_cast<int64_t>(n) * n * n;
  PointValueSet out;
  out.source_n = n;
  out.points = Tensor({static_cast<int>(total), 3});
  out.labels = Tensor({static_cast<int>(total), 1});
  out.weights = Tensor({static_cast<int>(total), 1});
  int64_t r = 0;
  const int di[6] = {1, -1, 0, 0, 0, 0}, dj[6] = {0, 0, 1, -1, 0, 0}, dk[6] = {0, 0, 0, 0, 1, -1};
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i, ++r) {
        const Vec3 c = grid.center(i, j, k);
        out.points[r * 3 + 0] = c.x;
        out.points[r * 3 + 1] = c.y;
        out.points[r * 3 + 2] = c.z;
        const bool occ = grid.at(i, j, k);
        out.labels[r] = (occ != invert_labels) ? 1.0 : 0.0;
        bool boundary = false;
        for (int m = 0; m < 6 && !boundary; ++m) {
          const int ni = i + di[m], nj = j + dj[m], nk = k + dk[m];
          if (ni < 0 || ni >= n || nj < 0 || nj >= n || nk < 0 || nk >= n) continue;
          if (grid.at(ni, nj, nk) != occ) boundary = true;
        }
        out.weights[r] = boundary ? w_surf : 1.0;
      }
  return out;
}

std::vector<int> ImplicitDecoderConfig::layer_widths() const {
  if (num_fc_layers != 5 && num_fc_layers != 6)
    throw std::runtime_error("implicit decoder supports 5 or 6 fully connected layers");
  std::vector<int> w;
  w.push_back(latent_dim + 3);
  if (num_fc_layers == 6) w.push_back(512);
  for (int h : hidden) w.push_back(h);
  w.push_back(1);
  return w;
}

int64_t ImplicitDecoderConfig::param_count() const {
  const auto w = layer_widths();
  int64_t n = 0;
  for (size_t i = 0; i + 1 < w.size(); ++i) n += static_cast<int64_t>(w[i]) * w[i + 1] + w[i + 1];
  return n;
}

void ensure_implicit_decoder(ParamStore& ps, const ImplicitDecoderConfig& cfg, Rng& rng) {
  const auto widths = cfg.layer_widths();
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    ps.ensure("imdec.fc" + std::to_string(l) + ".w", {widths[l], widths[l + 1]},
              glorot_init(rng, widths[l], widths[l + 1]));
    ps.ensure("imdec.fc" + std::to_string(l) + ".b", {widths[l + 1]}, const_init(0.0));
  }
}

int implicit_decoder_forward(Graph& g, const ImplicitDecoderConfig& cfg, int latent_node,
                             int points_node) {
  const auto widths = cfg.layer_widths();
  int x = g.concat(latent_node, points_node);  // point coordinate enters at the first layer only
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    x = g.dense(x, "imdec.fc" + std::to_string(l) + ".w", "imdec.fc" + std::to_string(l) + ".b");
    if (l + 2 < widths.size()) x = g.leaky_relu(x, 0.2);
  }
  return g.sigmoid(x);  // N x 1 in (0,1)
}

std::vector<double> implicit_forward(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                                     const std::vector<double>& latent, const Tensor& points) {
  if (points.rank() != 2 || points.dim(1) != 3)
    throw std::runtime_error("implicit_forward: points must be N x 3");
  Tensor pts = points;
  for (int64_t i = 0; i < pts.numel(); ++i) pts[i] = std::clamp(pts[i], 0.0, 1.0);
  Graph g(&ps, Graph::Mode::kEval);
  const int ln = g.input(broadcast_latent(latent, pts.dim(0)));
  const int pn = g.input(std::move(pts));
  const int out = implicit_decoder_forward(g, cfg, ln, pn);
  return g.value(out).data;
}

double implicit_loss_value(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                           const std::vector<double>& latent, const PointValueSet& pvs) {
  if (pvs.count() == 0) throw std::runtime_error("implicit loss: empty point set");
  Graph g(&ps, Graph::Mode::kEval);
  const int ln = g.input(broadcast_latent(latent, pvs.count()));
  const int pred = implicit_decoder_forward(g, cfg, ln, g.input(pvs.points));
  const int loss = g.weighted_mse(pred, g.input(pvs.labels), g.input(pvs.weights));
  return g.value(loss)[0];
}

ImplicitTrainResult pretrain_autoencoder(ParamStore& ps, const std::vector<VoxelGrid>& grids,
                                         const std::vector<std::string>& shape_ids,
                                         const ImplicitTrainConfig& cfg) {
  if (grids.empty()) throw std::runtime_error("pretrain_autoencoder: no grids");
  Rng rng(cfg.seed);
  ensure_vox_encoder(ps, cfg.encoder_grid_n, rng);
  ensure_implicit_decoder(ps, cfg.decoder, rng);

  std::vector<Tensor> enc_inputs;
  for (const auto& g : grids) {
    if (g.n != cfg.encoder_grid_n)
      throw std::runtime_error("pretrain_autoencoder: encoder grid resolution mismatch");
    enc_inputs.push_back(grid_to_tensor(g));
  }

  ImplicitTrainResult result;
  int global_step = 0;
  for (int res : cfg.resolutions) {
    // per-shape supervision at the curriculum resolution
    std::vector<PointValueSet> supervision;
    for (const auto& src : grids)
      supervision.push_back(
          sample_point_values(regrid_occupancy(src, res), cfg.w_surf, cfg.invert_labels));

    for (int step = 0; step < cfg.steps_per_resolution; ++step, ++global_step) {
      double loss_sum = 0;
      for (size_t s = 0; s < grids.size(); ++s) {
        const PointValueSet& pvs = supervision[s];
        const int64_t total = pvs.count();
        const int64_t take =
            cfg.points_per_step > 0 ? std::min<int64_t>(cfg.points_per_step, total) : total;
        Tensor pts({static_cast<int>(take), 3});
        Tensor labels({static_cast<int>(take), 1});
        Tensor weights({static_cast<int>(take), 1});
        for (int64_t r = 0; r < take; ++r) {
          const int64_t src = take == total ? r : rng.next_below(total);
          for (int c = 0; c < 3; ++c) pts[r * 3 + c] = pvs.points[src * 3 + c];
          labels[r] = pvs.labels[src];
          weights[r] = pvs.weights[src];
        }

        ps.zero_grad();
        Graph g(&ps, Graph::Mode::kTrain, &rng);
        const int latent = vox_encoder_forward(g, g.input(enc_inputs[s]), cfg.encoder_grid_n);
        const int lat_rows = g.broadcast_rows(latent, static_cast<int>(take));
        const int pred = implicit_decoder_forward(g, cfg.decoder, lat_rows, g.input(std::move(pts)));
        const int loss = g.weighted_mse(pred, g.input(std::move(labels)), g.input(std::move(weights)));
        g.backward(loss);
        loss_sum += g.value(loss)[0];
        adam_step_prefixes(ps, cfg.adam, {"imenc.", "imdec."});
      }
      const double mean_loss = loss_sum / static_cast<double>(grids.size());
      result.loss_trace.push_back(mean_loss);
      if (cfg.on_step) cfg.on_step(global_step, mean_loss);
      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
          (global_step + 1) % cfg.checkpoint_every == 0)
        save_checkpoint(ps, cfg.checkpoint_path, cfg.config_hash);
    }
  }

  for (size_t s = 0; s < grids.size(); ++s) {
    std::vector<double> z = encode_grid(ps, grids[s]);
    result.latents.push_back(z);
    const std::string name = "latent/" + (s < shape_ids.size() ? shape_ids[s] : std::to_string(s));
    if (ps.has(name)) {
      Tensor& t = ps.param(name);
      std::copy(z.begin(), z.end(), t.data.begin());
    } else {
      ps.ensure(name, {kLatentDim},
                [&z](Tensor& t) { std::copy(z.begin(), z.end(), t.data.begin()); });
    }
  }
  return result;
}

std::vector<double> encode_grid(ParamStore& ps, const VoxelGrid& grid) {
  Graph g(&ps, Graph::Mode::kEval);
  const int node = vox_encoder_forward(g, g.input(grid_to_tensor(grid)), grid.n);
  return g.value(node).data;
}

std::vector<double> optimize_latent(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                                    const PointValueSet& pvs, int steps, double lr, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> z(kLatentDim, 0.0);
  std::vector<double> m(kLatentDim, 0.0), v(kLatentDim, 0.0);
  const AdamConfig ac{lr, 0.9, 0.999, 1e-8};
  for (int t = 1; t <= steps; ++t) {
    Graph g(&ps, Graph::Mode::kEval);
    const int lrow = g.input_grad(Tensor({1, kLatentDim}, std::vector<double>(z)));
    const int ln = g.broadcast_rows(lrow, static_cast<int>(pvs.count()));
    const int pred = implicit_decoder_forward(g, cfg, ln, g.input(pvs.points));
    const int loss = g.weighted_mse(pred, g.input(pvs.labels), g.input(pvs.weights));
    ps.zero_grad();
    g.backward(loss);
    const Tensor& gl = g.grad(lrow);
    for (size_t c = 0; c < static_cast<size_t>(kLatentDim); ++c) {
      const double grad = gl[static_cast<int64_t>(c)];
      m[c] = ac.beta1 * m[c] + (1 - ac.beta1) * grad;
      v[c] = ac.beta2 * v[c] + (1 - ac.beta2) * grad * grad;
      const double mhat = m[c] / (1 - std::pow(ac.beta1, t));
      const double vhat = v[c] / (1 - std::pow(ac.beta2, t));
      z[c] -= ac.lr * mhat / (std::sqrt(vhat) + ac.eps);
    }
  }
  return z;
}

std::vector<double> train_singleview_encoder(ParamStore& ps, const std::vector<Tensor>& maps,
                                             const std::vector<std::vector<double>>& target_latents,
                                             const ViewEncoderTrainConfig& cfg) {
  if (maps.empty() || maps.size() != target_latents.size())
    throw std::runtime_error("train_singleview_encoder: maps/latents size mismatch");
  for (const auto& z : target_latents)
    if (z.size() != static_cast<size_t>(kLatentDim))
      throw std::runtime_error("train_singleview_encoder: missing or malformed target latent");
  Rng rng(cfg.seed);
  ensure_view_encoder(ps, cfg.image_size, cfg.in_channels, rng);

  const int B = static_cast<int>(maps.size());
  const int C = maps[0].dim(0), S = maps[0].dim(1);
  if (C != cfg.in_channels || S != cfg.image_size)
    throw std::runtime_error("train_singleview_encoder: map shape mismatch");
  Tensor batch({B, C, S, S});
  Tensor targets({B, kLatentDim});
  for (int b = 0; b < B; ++b) {
    std::copy(maps[static_cast<size_t>(b)].data.begin(), maps[static_cast<size_t>(b)].data.end(),
              batch.data.begin() + static_cast<int64_t>(b) * C * S * S);
    for (int c = 0; c < kLatentDim; ++c)
      targets[static_cast<int64_t>(b) * kLatentDim + c] =
          target_latents[static_cast<size_t>(b)][static_cast<size_t>(c)];
  }

  std::vector<double> trace;
  trace.reserve(static_cast<size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    ps.zero_grad();
    Graph g(&ps, Graph::Mode::kTrain, &rng);
    const int pred = view_encoder_forward(g, g.input(batch), cfg.image_size);
    const int loss = g.mse_mean(pred, g.input(targets));
    g.backward(loss);
    adam_step_prefixes(ps, cfg.adam, {"venc."});
    trace.push_back(g.value(loss)[0]);
    if (cfg.on_step) cfg.on_step(step, trace.back());
  }
  return trace;
}

std::vector<double> encode_view(ParamStore& ps, const Tensor& map) {
  Graph g(&ps, Graph::Mode::kEval);
  Tensor batch({1, map.dim(0), map.dim(1), map.dim(2)}, map.data);
  const int out = view_encoder_forward(g, g.input(std::move(batch)), map.dim(1));
  return g.value(out).data;
}

ScalarField evaluate_grid(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                          const std::vector<double>& latent, int n) {
  if (n < 2) throw std::runtime_error("evaluate_grid: n must be >= 2");
  ScalarField f(n);
  const int64_t total = static_cast<int64_t>(n) * n * n;
  const int64_t chunk = 4096;
  VoxelGrid geom(n);
  for (int64_t base = 0; base < total; base += chunk) {
    const int64_t take = std::min(chunk, total - base);
    Tensor pts({static_cast<int>(take), 3});
    for (int64_t r = 0; r < take; ++r) {
      const int64_t idx = base + r;
      const int i = static_cast<int>(idx % n);
      const int j = static_cast<int>((idx / n) % n);
      const int k = static_cast<int>(idx / (static_cast<int64_t>(n) * n));
      const Vec3 c = geom.center(i, j, k);
      pts[r * 3 + 0] = c.x;
      pts[r * 3 + 1] = c.y;
      pts[r * 3 + 2] = c.z;
    }
    const std::vector<double> vals = implicit_forward(ps, cfg, latent, pts);
    for (int64_t r = 0; r < take; ++r)
      f.values[static_cast<size_t>(base + r)] = vals[static_cast<size_t>(r)];
  }
  return f;
}

TriMesh extract_mesh(ParamStore& ps, const ImplicitDecoderConfig& cfg,
                     const std::vector<double>& latent, int resolution, const ExtractOptions& opt) {
  const ScalarField f = evaluate_grid(ps, cfg, latent, resolution);
  TriMesh m = marching_cubes(f, opt.threshold);
  if (opt.smooth_iterations > 0) m = laplacian_smooth(m, opt.smooth_iterations);
  return m;
}

}  // namespace s2m
