#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "s2m/geometry.hpp"
#include "s2m/graph.hpp"

using namespace s2m;
using s2m::test::check_gradients;
using s2m::test::random_tensor;

namespace {
constexpr double kGradTol = 1e-4;

struct Dims {
  int B, C, H, W;
};

Dims random_dims(Rng& rng) {
  return {2 + static_cast<int>(rng.next_below(2)), 1 + static_cast<int>(rng.next_below(3)),
          3 + static_cast<int>(rng.next_below(3)), 3 + static_cast<int>(rng.next_below(3))};
}
}  // namespace

TEST_CASE("dense gradient matches finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(100 + trial);
    const int B = 2 + static_cast<int>(rng.next_below(3));
    const int I = 2 + static_cast<int>(rng.next_below(4));
    const int O = 1 + static_cast<int>(rng.next_below(4));
    ParamStore ps;
    ps.ensure("x", {B, I}, [&](Tensor& t) { t = random_tensor(rng, {B, I}); });
    ps.ensure("w", {I, O}, [&](Tensor& t) { t = random_tensor(rng, {I, O}); });
    ps.ensure("b", {O}, [&](Tensor& t) { t = random_tensor(rng, {O}); });
    auto build = [](Graph& g) { return g.sum(g.tanh_act(g.dense(g.param("x"), "w", "b"))); };
    CHECK(check_gradients(ps, build, {"x", "w", "b"}) < kGradTol);
  }
}

TEST_CASE("conv2d gradient matches finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(200 + trial);
    const Dims d = random_dims(rng);
    const int Cout = 1 + static_cast<int>(rng.next_below(3));
    const int K = 3;
    const int stride = 1 + static_cast<int>(rng.next_below(2));
    ParamStore ps;
    ps.ensure("x", {d.B, d.C, d.H, d.W},
              [&](Tensor& t) { t = random_tensor(rng, {d.B, d.C, d.H, d.W}); });
    ps.ensure("w", {Cout, d.C, K, K},
              [&](Tensor& t) { t = random_tensor(rng, {Cout, d.C, K, K}); });
    ps.ensure("b", {Cout}, [&](Tensor& t) { t = random_tensor(rng, {Cout}); });
    auto build = [stride](Graph& g) {
      return g.sum(g.sigmoid(g.conv2d(g.param("x"), "w", "b", stride, 1)));
    };
    CHECK(check_gradients(ps, build, {"x", "w", "b"}) < kGradTol);
  }
}

TEST_CASE("conv3d gradient matches finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(250 + trial);
    const int B = 1 + static_cast<int>(rng.next_below(2));
    const int C = 1 + static_cast<int>(rng.next_below(2));
    const int N = 3 + static_cast<int>(rng.next_below(2));
    const int Cout = 1 + static_cast<int>(rng.next_below(2));
    ParamStore ps;
    ps.ensure("x", {B, C, N, N, N}, [&](Tensor& t) { t = random_tensor(rng, {B, C, N, N, N}); });
    ps.ensure("w", {Cout, C, 3, 3, 3},
              [&](Tensor& t) { t = random_tensor(rng, {Cout, C, 3, 3, 3}); });
    ps.ensure("b", {Cout}, [&](Tensor& t) { t = random_tensor(rng, {Cout}); });
    auto build = [](Graph& g) {
      return g.sum(g.tanh_act(g.conv3d(g.param("x"), "w", "b", 2, 1)));
    };
    CHECK(check_gradients(ps, build, {"x", "w", "b"}) < kGradTol);
  }
}

TEST_CASE("batchnorm gradient matches finite differences in train mode") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(300 + trial);
    const Dims d = random_dims(rng);
    ParamStore ps;
    ps.ensure("x", {d.B, d.C, d.H, d.W},
              [&](Tensor& t) { t = random_tensor(rng, {d.B, d.C, d.H, d.W}); });
    auto build = [](Graph& g) { return g.sum(g.tanh_act(g.batchnorm(g.param("x"), "bn"))); };
    // first build registers bn.gamma/bn.beta; perturb them away from the trivial init
    check_gradients(ps, build, {});
    Rng prng(400 + trial);
    ps.param("bn.gamma") = random_tensor(prng, {d.C}, 0.5, 1.5);
    ps.param("bn.beta") = random_tensor(prng, {d.C}, -0.5, 0.5);
    CHECK(check_gradients(ps, build, {"x", "bn.gamma", "bn.beta"}) < kGradTol);
  }
}

TEST_CASE("activation, upsample, concat and dropout-off gradients match finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(500 + trial);
    const Dims d = random_dims(rng);
    ParamStore ps;
    ps.ensure("x", {d.B, d.C, d.H, d.W},
              [&](Tensor& t) { t = random_tensor(rng, {d.B, d.C, d.H, d.W}, -0.9, 0.9); });
    ps.ensure("y", {d.B, 2, d.H, d.W},
              [&](Tensor& t) { t = random_tensor(rng, {d.B, 2, d.H, d.W}); });
    auto build = [](Graph& g) {
      const int a = g.leaky_relu(g.param("x"), 0.2);
      const int b = g.sigmoid(g.param("y"));
      const int c = g.concat(a, b);
      const int u = g.upsample2d_nearest(c, 2);
      return g.sum(g.tanh_act(g.dropout(u, 0.0)));
    };
    CHECK(check_gradients(ps, build, {"x", "y"}) < kGradTol);
  }
}

TEST_CASE("dropout gradient matches finite differences with a repeatable mask") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(600 + trial);
    ParamStore ps;
    ps.ensure("x", {2, 8}, [&](Tensor& t) { t = random_tensor(rng, {2, 8}); });
    auto build = [](Graph& g) { return g.sum(g.tanh_act(g.dropout(g.param("x"), 0.5))); };
    CHECK(check_gradients(ps, build, {"x"}) < kGradTol);
  }
}

TEST_CASE("normalize_vec3, broadcast_rows and slice_rows gradients match finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(700 + trial);
    const Dims d = random_dims(rng);
    ParamStore ps;
    ps.ensure("n", {d.B, 3, d.H, d.W},
              [&](Tensor& t) { t = random_tensor(rng, {d.B, 3, d.H, d.W}, 0.2, 1.0); });
    ps.ensure("r", {1, 4}, [&](Tensor& t) { t = random_tensor(rng, {1, 4}); });
    auto build = [](Graph& g) {
      const int a = g.sum(g.normalize_vec3(g.param("n")));
      const int rows = g.broadcast_rows(g.param("r"), 5);
      const int b = g.sum(g.tanh_act(g.slice_rows(rows, 1, 4)));
      return g.weighted_sum({{a, 1.0}, {b, 1.0}});
    };
    CHECK(check_gradients(ps, build, {"n", "r"}) < kGradTol);
  }
}

TEST_CASE("masked depth and normal loss gradients match finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(800 + trial);
    const Dims d = random_dims(rng);
    ParamStore ps;
    Tensor gt_d = random_tensor(rng, {d.B, 1, d.H, d.W});
    Tensor gt_n = random_tensor(rng, {d.B, 3, d.H, d.W});
    Tensor mask({d.B, 1, d.H, d.W});
    for (auto& m : mask.data) m = rng.next_double() < 0.5 ? 1.0 : 0.0;
    // keep predictions away from gt so the L1 kink never sits under a probe
    ps.ensure("pd", {d.B, 1, d.H, d.W}, [&](Tensor& t) {
      t = gt_d;
      for (auto& v : t.data) v += (rng.next_double() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 0.5);
    });
    ps.ensure("pn", {d.B, 3, d.H, d.W},
              [&](Tensor& t) { t = random_tensor(rng, {d.B, 3, d.H, d.W}); });
    auto build = [&](Graph& g) {
      const int ld = g.masked_l1_sum(g.param("pd"), g.input(gt_d), g.input(mask));
      const int ln = g.masked_cosine_sum(g.param("pn"), g.input(gt_n), g.input(mask));
      return g.weighted_sum({{ld, 1.0}, {ln, 1.0}});
    };
    CHECK(check_gradients(ps, build, {"pd", "pn"}) < kGradTol);
  }
}

TEST_CASE("mask cross-entropy and adversarial generator loss gradients match finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(900 + trial);
    const int n = 4 + static_cast<int>(rng.next_below(8));
    ParamStore ps;
    Tensor gt({n, 1});
    for (auto& v : gt.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
    ps.ensure("logit", {n, 1}, [&](Tensor& t) { t = random_tensor(rng, {n, 1}, -2.0, 2.0); });
    ps.ensure("dlogit", {n, 1}, [&](Tensor& t) { t = random_tensor(rng, {n, 1}, -2.0, 2.0); });
    auto build = [&](Graph& g) {
      const int lm = g.bce_sum(g.sigmoid(g.param("logit")), g.input(gt));
      const int la = g.gan_generator_loss(g.sigmoid(g.param("dlogit")));
      return g.weighted_sum({{lm, 1.0}, {la, 0.01}});
    };
    CHECK(check_gradients(ps, build, {"logit", "dlogit"}) < kGradTol);
  }
}

TEST_CASE("weighted occupancy loss gradient matches finite differences") {
  for (uint64_t trial = 0; trial < 5; ++trial) {
    Rng rng(1000 + trial);
    const int n = 6 + static_cast<int>(rng.next_below(10));
    ParamStore ps;
    Tensor labels({n, 1});
    Tensor weights({n, 1});
    for (auto& v : labels.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
    for (auto& w : weights.data) w = rng.next_double() < 0.3 ? 4.0 : 1.0;
    ps.ensure("logit", {n, 1}, [&](Tensor& t) { t = random_tensor(rng, {n, 1}, -2.0, 2.0); });
    auto build = [&](Graph& g) {
      return g.weighted_mse(g.sigmoid(g.param("logit")), g.input(labels), g.input(weights));
    };
    CHECK(check_gradients(ps, build, {"logit"}) < kGradTol);
  }
}

TEST_CASE("masked L1 micro-identities") {
  ParamStore ps;
  Graph g(&ps, Graph::Mode::kEval);
  // one view, 4x4, exactly 10 foreground pixels, pred = gt + 0.5
  Tensor gt({1, 1, 4, 4});
  Tensor mask({1, 1, 4, 4});
  Tensor pred({1, 1, 4, 4});
  Rng rng(1);
  for (int i = 0; i < 16; ++i) {
    gt[i] = rng.uniform(-0.5, 0.5);
    mask[i] = i < 10 ? 1.0 : 0.0;
    pred[i] = gt[i] + 0.5;
  }
  const int loss = g.masked_l1_sum(g.input(pred), g.input(gt), g.input(mask));
  CHECK(g.value(loss)[0] == doctest::Approx(5.0).epsilon(1e-12));
  const int zero = g.masked_l1_sum(g.input(gt), g.input(gt), g.input(mask));
  CHECK(g.value(zero)[0] == 0.0);
}

TEST_CASE("masked cosine micro-identities") {
  ParamStore ps;
  Graph g(&ps, Graph::Mode::kEval);
  const int k = 7;  // foreground pixels in a 3x3 map
  Tensor n1({1, 3, 3, 3});
  Tensor mask({1, 1, 3, 3});
  Rng rng(2);
  for (int i = 0; i < 9; ++i) mask[i] = i < k ? 1.0 : 0.0;
  for (int i = 0; i < 9; ++i) {
    Vec3 v = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    n1[i] = v.x;
    n1[9 + i] = v.y;
    n1[18 + i] = v.z;
  }
  Tensor opposite = n1;
  for (auto& v : opposite.data) v = -v;
  Tensor orthogonal({1, 3, 3, 3});
  for (int i = 0; i < 9; ++i) {
    // rotate each (x,y,z) to (-y,x,0) normalized in-plane with z: pick a vector
    // orthogonal by construction
    const Vec3 v{n1[i], n1[9 + i], n1[18 + i]};
    const Vec3 o = v.cross(Vec3{0.1, 0.9, 0.3}).normalized();
    orthogonal[i] = o.x;
    orthogonal[9 + i] = o.y;
    orthogonal[18 + i] = o.z;
  }
  const int same = g.masked_cosine_sum(g.input(n1), g.input(n1), g.input(mask));
  CHECK(g.value(same)[0] == doctest::Approx(0.0).epsilon(1e-12));
  const int opp = g.masked_cosine_sum(g.input(opposite), g.input(n1), g.input(mask));
  CHECK(g.value(opp)[0] == doctest::Approx(2.0 * k).epsilon(1e-12));
  const int orth = g.masked_cosine_sum(g.input(orthogonal), g.input(n1), g.input(mask));
  CHECK(g.value(orth)[0] == doctest::Approx(1.0 * k).epsilon(1e-9));
}

TEST_CASE("cross-entropy and adversarial micro-identities") {
  ParamStore ps;
  Graph g(&ps, Graph::Mode::kEval);
  const int n = 24;
  Tensor gt({n, 1});
  Rng rng(3);
  for (auto& v : gt.data) v = rng.next_double() < 0.5 ? 1.0 : 0.0;
  const int half = g.bce_sum(g.input(Tensor({n, 1}, 0.5)), g.input(gt));
  CHECK(g.value(half)[0] == doctest::Approx(n * std::log(2.0)).epsilon(1e-12));
  const int match = g.bce_sum(g.input(gt), g.input(gt));
  // pred == gt hits the 1e-7 clamp; the residual is n * CE(1e-7)
  CHECK(g.value(match)[0] <= n * (-std::log(1.0 - 1e-7)) + 1e-12);
  CHECK(g.value(match)[0] >= 0.0);

  const int V = 12;
  const int adv_half = g.gan_generator_loss(g.input(Tensor({V, 1}, 0.5)));
  CHECK(g.value(adv_half)[0] == doctest::Approx(V * std::log(2.0)).epsilon(1e-12));
  const int adv_fooled = g.gan_generator_loss(g.input(Tensor({V, 1}, 1.0)));
  // fully fooled D hits the probability clamp: floor is V * -log(1 - 1e-7)
  CHECK(g.value(adv_fooled)[0] >= 0.0);
  CHECK(g.value(adv_fooled)[0] <= V * 1.1e-7);
}

TEST_CASE("weighted occupancy loss identities and weight-scaling invariance") {
  ParamStore ps;
  Graph g(&ps, Graph::Mode::kEval);
  Rng rng(4);
  const int n = 50;
  Tensor pred({n, 1}), labels({n, 1}), w({n, 1});
  for (int i = 0; i < n; ++i) {
    pred[i] = rng.next_double();
    labels[i] = rng.next_double() < 0.5 ? 1.0 : 0.0;
    w[i] = rng.next_double() < 0.3 ? 4.0 : 1.0;
  }
  const int zero = g.weighted_mse(g.input(labels), g.input(labels), g.input(w));
  CHECK(g.value(zero)[0] == 0.0);

  const double base = g.value(g.weighted_mse(g.input(pred), g.input(labels), g.input(w)))[0];
  Tensor w2 = w, w3 = w;
  for (auto& v : w2.data) v *= 2.0;  // power-of-two scaling is bit-exact
  for (auto& v : w3.data) v *= 3.0;
  CHECK(g.value(g.weighted_mse(g.input(pred), g.input(labels), g.input(w2)))[0] == base);
  CHECK(g.value(g.weighted_mse(g.input(pred), g.input(labels), g.input(w3)))[0] ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("weighted_sum gradient is the lambda-weighted sum of component gradients") {
  Rng rng(5);
  Tensor gt_d = random_tensor(rng, {1, 1, 2, 2});
  Tensor mask({1, 1, 2, 2}, 1.0);
  Tensor x0 = random_tensor(rng, {1, 1, 2, 2});

  auto grad_of = [&](double l1, double l3) {
    ParamStore ps;
    ps.ensure("p", {1, 1, 2, 2}, [&](Tensor& t) { t = x0; });
    ps.zero_grad();
    Graph g(&ps, Graph::Mode::kEval);
    const int p = g.param("p");
    const int ld = g.masked_l1_sum(p, g.input(gt_d), g.input(mask));
    const int lm = g.bce_sum(g.sigmoid(p), g.input(mask));
    g.backward(g.weighted_sum({{ld, l1}, {lm, l3}}));
    return ps.grads.at("p");
  };
  const Tensor both = grad_of(2.0, 0.5);
  const Tensor only_d = grad_of(1.0, 0.0);
  const Tensor only_m = grad_of(0.0, 1.0);
  for (int64_t i = 0; i < both.numel(); ++i)
    CHECK(both[i] == doctest::Approx(2.0 * only_d[i] + 0.5 * only_m[i]).epsilon(1e-12));
}

TEST_CASE("hand-computed total loss on a single-pixel batch") {
  // 1x1 maps: depth pred 0.3 vs gt -0.1, normals at 60 degrees, mask pred 0.8
  // vs gt 1, adversarial D(fake) = 0.25; lambda = (1, 1, 1, 0.01)
  ParamStore ps;
  Graph g(&ps, Graph::Mode::kEval);
  Tensor mask({1, 1, 1, 1}, 1.0);
  const int ld = g.masked_l1_sum(g.input(Tensor({1, 1, 1, 1}, 0.3)),
                                 g.input(Tensor({1, 1, 1, 1}, -0.1)), g.input(mask));
  Tensor n_pred({1, 3, 1, 1}, {1.0, 0.0, 0.0});
  Tensor n_gt({1, 3, 1, 1}, {0.5, std::sqrt(3.0) / 2.0, 0.0});
  const int ln = g.masked_cosine_sum(g.input(n_pred), g.input(n_gt), g.input(mask));
  const int lm = g.bce_sum(g.input(Tensor({1, 1, 1, 1}, 0.8)), g.input(mask));
  const int la = g.gan_generator_loss(g.input(Tensor({1, 1}, 0.25)));
  const int total = g.weighted_sum({{ld, 1.0}, {ln, 1.0}, {lm, 1.0}, {la, 0.01}});
  const double expected = 0.4 + (1.0 - 0.5) + (-std::log(0.8)) + 0.01 * (-std::log(0.25));
  CHECK(g.value(total)[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("background pixels do not influence the masked losses") {
  Rng rng(6);
  Tensor gt_d = random_tensor(rng, {1, 1, 4, 4});
  Tensor gt_n = random_tensor(rng, {1, 3, 4, 4});
  Tensor mask({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) mask[i] = i % 3 == 0 ? 1.0 : 0.0;

  auto losses = [&](const Tensor& pd, const Tensor& pn) {
    ParamStore ps;
    Graph g(&ps, Graph::Mode::kEval);
    const int ld = g.masked_l1_sum(g.input(pd), g.input(gt_d), g.input(mask));
    const int ln = g.masked_cosine_sum(g.input(pn), g.input(gt_n), g.input(mask));
    return std::pair<double, double>{g.value(ld)[0], g.value(ln)[0]};
  };
  Tensor pd = random_tensor(rng, {1, 1, 4, 4});
  Tensor pn = random_tensor(rng, {1, 3, 4, 4});
  const auto base = losses(pd, pn);
  Tensor pd2 = pd, pn2 = pn;
  for (int i = 0; i < 16; ++i)
    if (mask[i] == 0.0) {
      pd2[i] += 10.0;
      for (int c = 0; c < 3; ++c) pn2[c * 16 + i] -= 7.0;
    }
  const auto perturbed = losses(pd2, pn2);
  CHECK(base.first == perturbed.first);
  CHECK(base.second == perturbed.second);
}

TEST_CASE("prefix-restricted Adam leaves other parameters bit-identical") {
  ParamStore ps;
  Rng rng(7);
  ps.ensure("a.x", {4}, [&](Tensor& t) { t = random_tensor(rng, {4}); });
  ps.ensure("b.y", {4}, [&](Tensor& t) { t = random_tensor(rng, {4}); });
  const Tensor a_before = ps.param("a.x");
  const Tensor b_before = ps.param("b.y");
  ps.zero_grad();
  for (auto& [name, grad] : ps.grads)
    for (auto& v : grad.data) v = 0.5;
  adam_step_prefixes(ps, AdamConfig{}, {"a."});
  CHECK(ps.param("b.y").data == b_before.data);
  CHECK(ps.param("a.x").data != a_before.data);
}

TEST_CASE("alternating updates on a 1-D toy distribution reach the D equilibrium band") {
  // generator: scalar z -> dense(1->1); discriminator: scalar -> dense(1->4) ->
  // leaky relu -> dense(4->1) -> sigmoid. Real samples sit at 0.7.
  ParamStore ps;
  Rng rng(8);
  ps.ensure("g.w", {1, 1}, glorot_init(rng, 1, 1));
  ps.ensure("g.b", {1}, const_init(0.0));
  ps.ensure("d.w1", {1, 4}, glorot_init(rng, 1, 4));
  ps.ensure("d.b1", {4}, const_init(0.0));
  ps.ensure("d.w2", {4, 1}, glorot_init(rng, 4, 1));
  ps.ensure("d.b2", {1}, const_init(0.0));

  const int B = 8;
  Tensor z({B, 1});
  Tensor real({B, 1});
  for (int i = 0; i < B; ++i) {
    z[i] = rng.uniform(-1.0, 1.0);
    real[i] = 0.7 + 0.02 * rng.uniform(-1.0, 1.0);
  }
  auto disc = [](Graph& g, int x) {
    return g.sigmoid(g.dense(g.leaky_relu(g.dense(x, "d.w1", "d.b1"), 0.2), "d.w2", "d.b2"));
  };
  AdamConfig adam{5e-3, 0.9, 0.999, 1e-8};
  double d_real_mean = 0, d_fake_mean = 0;
  for (int step = 0; step < 400; ++step) {
    Tensor fake_detached;
    {
      ps.zero_grad();
      Graph g(&ps, Graph::Mode::kEval);
      const int fake = g.dense(g.input(z), "g.w", "g.b");
      g.backward(g.gan_generator_loss(disc(g, fake)));
      fake_detached = g.value(fake);
      adam_step_prefixes(ps, adam, {"g."});
    }
    {
      ps.zero_grad();
      Graph g(&ps, Graph::Mode::kEval);
      const int dr = disc(g, g.input(real));
      const int df = disc(g, g.input(fake_detached));
      g.backward(g.gan_discriminator_loss(dr, df));
      adam_step_prefixes(ps, adam, {"d."});
      if (step >= 350) {
        for (int i = 0; i < B; ++i) {
          d_real_mean += g.value(dr)[i];
          d_fake_mean += g.value(df)[i];
        }
      }
    }
  }
  d_real_mean /= 50.0 * B;
  d_fake_mean /= 50.0 * B;
  CHECK(d_real_mean > 0.3);
  CHECK(d_real_mean < 0.7);
  CHECK(d_fake_mean > 0.3);
  CHECK(d_fake_mean < 0.7);
}
