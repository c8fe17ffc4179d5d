#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "s2m/graph.hpp"
#include "s2m/param_store.hpp"

namespace s2m::test {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Central finite-difference gradient check against the tape. `build` must be
// a pure function of the store contents (it is re-run for every probe with a
// fresh Rng(123), so dropout masks and the like repeat bit-exactly).
// Returns the max relative error over all elements of the named parameters.
inline double check_gradients(ParamStore& ps, const std::function<int(Graph&)>& build,
                              const std::vector<std::string>& names, double h = 1e-5) {
  const auto buffers_before = ps.buffers;  // batch-norm running stats are probe side effects
  auto eval_loss = [&]() {
    Rng rng(123);
    Graph g(&ps, Graph::Mode::kTrain, &rng);
    const double v = g.value(build(g))[0];
    ps.buffers = buffers_before;
    return v;
  };

  ps.zero_grad();
  {
    Rng rng(123);
    Graph g(&ps, Graph::Mode::kTrain, &rng);
    g.backward(build(g));
    ps.buffers = buffers_before;
  }
  std::map<std::string, Tensor> analytic;
  for (const auto& name : names) analytic.emplace(name, ps.grads.at(name));

  double worst = 0.0;
  for (const auto& name : names) {
    Tensor& p = ps.param(name);
    const Tensor& an = analytic.at(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double lp = eval_loss();
      p[i] = saved - h;
      const double lm = eval_loss();
      p[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      worst = std::max(worst, rel_err(fd, an[i]));
    }
  }
  return worst;
}

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace s2m::test
