#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2m/tensor.hpp"

namespace s2m {

// Named parameter tensors plus gradients, Adam moments and non-trainable
// buffers (batch-norm running stats). Ordered maps keep iteration
// deterministic.
struct ParamStore {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> grads;
  std::map<std::string, Tensor> m1;
  std::map<std::string, Tensor> m2;
  std::map<std::string, Tensor> buffers;
  long step_count = 0;

  bool has(const std::string& name) const { return params.count(name) != 0; }

  Tensor& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  // Registers on first use; later calls check the shape.
  template <typename InitFn>
  Tensor& ensure(const std::string& name, const Shape& shape, InitFn&& init) {
    auto it = params.find(name);
    if (it != params.end()) {
      if (it->second.shape != shape)
        throw std::runtime_error("parameter " + name + " registered with shape " +
                                 shape_str(it->second.shape) + ", requested " + shape_str(shape));
      return it->second;
    }
    Tensor t(shape);
    init(t);
    auto [ins, ok] = params.emplace(name, std::move(t));
    (void)ok;
    grads.emplace(name, Tensor(shape));
    m1.emplace(name, Tensor(shape));
    m2.emplace(name, Tensor(shape));
    return ins->second;
  }

  Tensor& buffer(const std::string& name, const Shape& shape, double fill) {
    auto it = buffers.find(name);
    if (it != buffers.end()) return it->second;
    return buffers.emplace(name, Tensor(shape, fill)).first->second;
  }

  void zero_grad() {
    for (auto& [name, g] : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
  }

  void accumulate_grad(const std::string& name, const Tensor& g) {
    Tensor& dst = grads.at(name);
    if (!dst.same_shape(g))
      throw std::runtime_error("gradient shape mismatch for " + name);
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
  }

  int64_t total_param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam step restricted to parameters whose name starts with any of the
// given prefixes; an empty prefix list updates everything. Prefix selection
// keeps untouched sub-networks bit-exact when several live in one store.
inline void adam_step_prefixes(ParamStore& ps, const AdamConfig& cfg,
                               const std::vector<std::string>& prefixes) {
  ps.step_count += 1;
  const double t = static_cast<double>(ps.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : ps.params) {
    bool match = prefixes.empty();
    for (const auto& pre : prefixes)
      if (name.compare(0, pre.size(), pre) == 0) {
        match = true;
        break;
      }
    if (!match) continue;
    const Tensor& g = ps.grads.at(name);
    Tensor& m = ps.m1.at(name);
    Tensor& v = ps.m2.at(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

inline void adam_step(ParamStore& ps, const AdamConfig& cfg) { adam_step_prefixes(ps, cfg, {}); }

// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
inline auto glorot_init(Rng& rng, int fan_in, int fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return [&rng, bound](Tensor& t) {
    for (auto& x : t.data) x = rng.uniform(-bound, bound);
  };
}

inline auto const_init(double v) {
  return [v](Tensor& t) { std::fill(t.data.begin(), t.data.end(), v); };
}

}  // namespace s2m
