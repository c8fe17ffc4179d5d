#include "s2m/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace s2m {

namespace {

constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) { return std::min(1.0 - kProbClamp, std::max(kProbClamp, p)); }

int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<int64_t>(i) * k;
    double* ci = c + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_at_b_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // C[MxN] += A^T B, A is KxM, B is KxN
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<int64_t>(p) * m;
    const double* bp = b + static_cast<int64_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_a_bt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // C[MxN] += A B^T, A is MxK, B is NxK
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<int64_t>(i) * k;
    double* ci = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<int64_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

int Graph::push(Tensor value, std::function<void()> back, std::string pname) {
  Node n;
  n.value = std::move(value);
  n.grad = Tensor(n.value.shape);
  n.back = std::move(back);
  n.param_name = std::move(pname);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_finite(int id, const char* op) const {
  for (double v : nodes_[static_cast<size_t>(id)].value.data)
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite value out of ") + op);
}

int Graph::input(Tensor t) { return push(std::move(t)); }

int Graph::input_grad(Tensor t) { return push(std::move(t)); }

int Graph::param(const std::string& name) {
  require(store_ != nullptr, "graph has no parameter store");
  return push(store_->param(name), {}, name);
}

int Graph::dense(int x, const std::string& w_name, const std::string& b_name) {
  const Tensor& xv = val(x);
  require(xv.rank() == 2, "dense: input must be rank 2, got " + shape_str(xv.shape));
  const int wid = param(w_name);
  const Tensor& w = val(wid);
  require(w.rank() == 2, "dense: weight must be rank 2");
  const int B = xv.dim(0), I = xv.dim(1), O = w.dim(1);
  require(w.dim(0) == I, "dense: shape mismatch, input " + shape_str(xv.shape) + " vs weight " +
                             shape_str(w.shape));
  int bid = -1;
  if (!b_name.empty()) {
    bid = param(b_name);
    require(val(bid).numel() == O, "dense: bias shape mismatch");
  }
  Tensor y({B, O});
  matmul_acc(xv.data.data(), w.data.data(), y.data.data(), B, I, O);
  if (bid >= 0) {
    const Tensor& b = val(bid);
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < O; ++j) y[static_cast<int64_t>(i) * O + j] += b[j];
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, wid, bid, B, I, O]() {
    const Tensor& gy = grd(out);
    // dX += gy W^T
    matmul_a_bt_acc(gy.data.data(), val(wid).data.data(), grd(x).data.data(), B, O, I);
    // dW += X^T gy
    matmul_at_b_acc(val(x).data.data(), gy.data.data(), grd(wid).data.data(), I, B, O);
    if (bid >= 0) {
      Tensor& gb = grd(bid);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < O; ++j) gb[j] += gy[static_cast<int64_t>(i) * O + j];
    }
  };
  return out;
}

namespace {

// Gather input patches into col[C*K*K x HW'] for one image (NCHW layout).
void im2col(const double* im, int C, int H, int W, int K, int stride, int pad, int Ho, int Wo,
            double* col) {
  const int HW = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        double* dst = col + (static_cast<int64_t>(c) * K * K + ky * K + kx) * HW;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(dst + oy * Wo, dst + (oy + 1) * Wo, 0.0);
            continue;
          }
          const double* src = im + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[oy * Wo + ox] = (ix < 0 || ix >= W) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_acc(const double* col, int C, int H, int W, int K, int stride, int pad, int Ho, int Wo,
                double* im) {
  const int HW = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const double* src = col + (static_cast<int64_t>(c) * K * K + ky * K + kx) * HW;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          double* dst = im + (static_cast<int64_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

int Graph::conv2d(int x, const std::string& w_name, const std::string& b_name, int stride,
                  int pad) {
  const Tensor& xv = val(x);
  require(xv.rank() == 4, "conv2d: input must be B x C x H x W, got " + shape_str(xv.shape));
  const int wid = param(w_name);
  const Tensor& w = val(wid);
  require(w.rank() == 4, "conv2d: weight must be Cout x Cin x K x K");
  const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Cout = w.dim(0), K = w.dim(2);
  require(w.dim(1) == C, "conv2d: channel mismatch, input " + shape_str(xv.shape) + " vs weight " +
                             shape_str(w.shape));
  require(w.dim(3) == K, "conv2d: kernel must be square");
  const int Ho = conv_out_size(H, K, stride, pad);
  const int Wo = conv_out_size(W, K, stride, pad);
  require(Ho >= 1 && Wo >= 1, "conv2d: non-positive output size for input " + shape_str(xv.shape));
  int bid = -1;
  if (!b_name.empty()) {
    bid = param(b_name);
    require(val(bid).numel() == Cout, "conv2d: bias shape mismatch");
  }

  const int CKK = C * K * K;
  const int HWo = Ho * Wo;
  Tensor y({B, Cout, Ho, Wo});
  std::vector<double> col(static_cast<size_t>(CKK) * HWo);
  for (int b = 0; b < B; ++b) {
    im2col(xv.data.data() + static_cast<int64_t>(b) * C * H * W, C, H, W, K, stride, pad, Ho, Wo,
           col.data());
    matmul_acc(w.data.data(), col.data(), y.data.data() + static_cast<int64_t>(b) * Cout * HWo,
               Cout, CKK, HWo);
  }
  if (bid >= 0) {
    const Tensor& bias = val(bid);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < Cout; ++c) {
        double* p = y.data.data() + (static_cast<int64_t>(b) * Cout + c) * HWo;
        for (int i = 0; i < HWo; ++i) p[i] += bias[c];
      }
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, wid, bid, B, C, H, W, K, stride, pad, Ho, Wo, Cout]() {
    const Tensor& gy = grd(out);
    const Tensor& w = val(wid);
    const int CKK = C * K * K;
    const int HWo = Ho * Wo;
    std::vector<double> col(static_cast<size_t>(CKK) * HWo);
    std::vector<double> gcol(static_cast<size_t>(CKK) * HWo);
    for (int b = 0; b < B; ++b) {
      const double* gyb = gy.data.data() + static_cast<int64_t>(b) * Cout * HWo;
      // dW += gy * col^T
      im2col(val(x).data.data() + static_cast<int64_t>(b) * C * H * W, C, H, W, K, stride, pad, Ho,
             Wo, col.data());
      matmul_a_bt_acc(gyb, col.data(), grd(wid).data.data(), Cout, HWo, CKK);
      // dcol = W^T gy, scatter back
      std::fill(gcol.begin(), gcol.end(), 0.0);
      matmul_at_b_acc(w.data.data(), gyb, gcol.data(), CKK, Cout, HWo);
      col2im_acc(gcol.data(), C, H, W, K, stride, pad, Ho, Wo,
                 grd(x).data.data() + static_cast<int64_t>(b) * C * H * W);
    }
    if (bid >= 0) {
      Tensor& gb = grd(bid);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cout; ++c) {
          const double* p = gy.data.data() + (static_cast<int64_t>(b) * Cout + c) * HWo;
          for (int i = 0; i < HWo; ++i) gb[c] += p[i];
        }
    }
  };
  return out;
}

namespace {

void vol2col(const double* im, int C, int D, int H, int W, int K, int stride, int pad, int Do,
             int Ho, int Wo, double* col) {
  const int n_out = Do * Ho * Wo;
  int64_t row = 0;
  for (int c = 0; c < C; ++c)
    for (int kz = 0; kz < K; ++kz)
      for (int ky = 0; ky < K; ++ky)
        for (int kx = 0; kx < K; ++kx, ++row) {
          double* dst = col + row * n_out;
          int o = 0;
          for (int oz = 0; oz < Do; ++oz) {
            const int iz = oz * stride - pad + kz;
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride - pad + ky;
              for (int ox = 0; ox < Wo; ++ox, ++o) {
                const int ix = ox * stride - pad + kx;
                if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W)
                  dst[o] = 0.0;
                else
                  dst[o] = im[((static_cast<int64_t>(c) * D + iz) * H + iy) * W + ix];
              }
            }
          }
        }
}

void col2vol_acc(const double* col, int C, int D, int H, int W, int K, int stride, int pad, int Do,
                 int Ho, int Wo, double* im) {
  const int n_out = Do * Ho * Wo;
  int64_t row = 0;
  for (int c = 0; c < C; ++c)
    for (int kz = 0; kz < K; ++kz)
      for (int ky = 0; ky < K; ++ky)
        for (int kx = 0; kx < K; ++kx, ++row) {
          const double* src = col + row * n_out;
          int o = 0;
          for (int oz = 0; oz < Do; ++oz) {
            const int iz = oz * stride - pad + kz;
            for (int oy = 0; oy < Ho; ++oy) {
              const int iy = oy * stride - pad + ky;
              for (int ox = 0; ox < Wo; ++ox, ++o) {
                const int ix = ox * stride - pad + kx;
                if (iz >= 0 && iz < D && iy >= 0 && iy < H && ix >= 0 && ix < W)
                  im[((static_cast<int64_t>(c) * D + iz) * H + iy) * W + ix] += src[o];
              }
            }
          }
        }
}

}  // namespace

int Graph::conv3d(int x, const std::string& w_name, const std::string& b_name, int stride,
                  int pad) {
  const Tensor& xv = val(x);
  require(xv.rank() == 5, "conv3d: input must be B x C x D x H x W");
  const int wid = param(w_name);
  const Tensor& w = val(wid);
  require(w.rank() == 5, "conv3d: weight must be Cout x Cin x K x K x K");
  const int B = xv.dim(0), C = xv.dim(1), D = xv.dim(2), H = xv.dim(3), W = xv.dim(4);
  const int Cout = w.dim(0), K = w.dim(2);
  require(w.dim(1) == C, "conv3d: channel mismatch");
  const int Do = conv_out_size(D, K, stride, pad);
  const int Ho = conv_out_size(H, K, stride, pad);
  const int Wo = conv_out_size(W, K, stride, pad);
  require(Do >= 1 && Ho >= 1 && Wo >= 1, "conv3d: non-positive output size");
  int bid = -1;
  if (!b_name.empty()) {
    bid = param(b_name);
    require(val(bid).numel() == Cout, "conv3d: bias shape mismatch");
  }
  const int CK3 = C * K * K * K;
  const int n_out = Do * Ho * Wo;
  Tensor y({B, Cout, Do, Ho, Wo});
  std::vector<double> col(static_cast<size_t>(CK3) * n_out);
  for (int b = 0; b < B; ++b) {
    vol2col(xv.data.data() + static_cast<int64_t>(b) * C * D * H * W, C, D, H, W, K, stride, pad,
            Do, Ho, Wo, col.data());
    matmul_acc(w.data.data(), col.data(), y.data.data() + static_cast<int64_t>(b) * Cout * n_out,
               Cout, CK3, n_out);
  }
  if (bid >= 0) {
    const Tensor& bias = val(bid);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < Cout; ++c) {
        double* p = y.data.data() + (static_cast<int64_t>(b) * Cout + c) * n_out;
        for (int i = 0; i < n_out; ++i) p[i] += bias[c];
      }
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, wid, bid, B, C, D, H, W, K, stride, pad, Do, Ho, Wo, Cout]() {
    const Tensor& gy = grd(out);
    const Tensor& w = val(wid);
    const int CK3 = C * K * K * K;
    const int n_out = Do * Ho * Wo;
    std::vector<double> col(static_cast<size_t>(CK3) * n_out);
    std::vector<double> gcol(static_cast<size_t>(CK3) * n_out);
    for (int b = 0; b < B; ++b) {
      const double* gyb = gy.data.data() + static_cast<int64_t>(b) * Cout * n_out;
      vol2col(val(x).data.data() + static_cast<int64_t>(b) * C * D * H * W, C, D, H, W, K, stride,
              pad, Do, Ho, Wo, col.data());
      matmul_a_bt_acc(gyb, col.data(), grd(wid).data.data(), Cout, n_out, CK3);
      std::fill(gcol.begin(), gcol.end(), 0.0);
      matmul_at_b_acc(w.data.data(), gyb, gcol.data(), CK3, Cout, n_out);
      col2vol_acc(gcol.data(), C, D, H, W, K, stride, pad, Do, Ho, Wo,
                  grd(x).data.data() + static_cast<int64_t>(b) * C * D * H * W);
    }
    if (bid >= 0) {
      Tensor& gb = grd(bid);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cout; ++c) {
          const double* p = gy.data.data() + (static_cast<int64_t>(b) * Cout + c) * n_out;
          for (int i = 0; i < n_out; ++i) gb[c] += p[i];
        }
    }
  };
  return out;
}

int Graph::batchnorm(int x, const std::string& prefix, double momentum, double eps) {
  const Tensor& xv = val(x);
  require(xv.rank() >= 2, "batchnorm: input rank must be >= 2");
  const int B = xv.dim(0);
  const int C = xv.dim(1);
  int64_t spatial = 1;
  for (int i = 2; i < xv.rank(); ++i) spatial *= xv.dim(i);
  const int64_t N = static_cast<int64_t>(B) * spatial;  // elements per channel
  require(!(training() && B < 2), "batchnorm: train mode requires batch size >= 2");

  store_->ensure(prefix + ".gamma", {C}, const_init(1.0));
  store_->ensure(prefix + ".beta", {C}, const_init(0.0));
  const int gid = param(prefix + ".gamma");
  const int bid = param(prefix + ".beta");
  Tensor& rmean = store_->buffer(prefix + ".running_mean", {C}, 0.0);
  Tensor& rvar = store_->buffer(prefix + ".running_var", {C}, 1.0);

  auto elem = [&](const Tensor& t, int b, int c, int64_t s) -> double {
    return t[(static_cast<int64_t>(b) * C + c) * spatial + s];
  };

  Tensor mean({C}), var({C});
  if (training()) {
    for (int c = 0; c < C; ++c) {
      double m = 0.0;
      for (int b = 0; b < B; ++b)
        for (int64_t s = 0; s < spatial; ++s) m += elem(xv, b, c, s);
      m /= static_cast<double>(N);
      double v = 0.0;
      for (int b = 0; b < B; ++b)
        for (int64_t s = 0; s < spatial; ++s) {
          const double d = elem(xv, b, c, s) - m;
          v += d * d;
        }
      v /= static_cast<double>(N);
      mean[c] = m;
      var[c] = v;
      rmean[c] = momentum * rmean[c] + (1.0 - momentum) * m;
      rvar[c] = momentum * rvar[c] + (1.0 - momentum) * v;
    }
  } else {
    mean = rmean;
    var = rvar;
  }

  const Tensor& gamma = val(gid);
  const Tensor& beta = val(bid);
  Tensor xhat(xv.shape);
  Tensor y(xv.shape);
  Tensor inv_std({C});
  for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const int64_t base = (static_cast<int64_t>(b) * C + c) * spatial;
      for (int64_t s = 0; s < spatial; ++s) {
        const double xh = (xv[base + s] - mean[c]) * inv_std[c];
        xhat[base + s] = xh;
        y[base + s] = gamma[c] * xh + beta[c];
      }
    }

  const bool train_stats = training();
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, gid, bid, B, C, spatial, N, xhat = std::move(xhat),
                    inv_std = std::move(inv_std), train_stats]() {
    const Tensor& gy = grd(out);
    const Tensor& gamma = val(gid);
    Tensor& gx = grd(x);
    Tensor& gg = grd(gid);
    Tensor& gb = grd(bid);
    for (int c = 0; c < C; ++c) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int b = 0; b < B; ++b) {
        const int64_t base = (static_cast<int64_t>(b) * C + c) * spatial;
        for (int64_t s = 0; s < spatial; ++s) {
          sum_gy += gy[base + s];
          sum_gy_xhat += gy[base + s] * xhat[base + s];
        }
      }
      gg[c] += sum_gy_xhat;
      gb[c] += sum_gy;
      if (train_stats) {
        const double scale = gamma[c] * inv_std[c] / static_cast<double>(N);
        for (int b = 0; b < B; ++b) {
          const int64_t base = (static_cast<int64_t>(b) * C + c) * spatial;
          for (int64_t s = 0; s < spatial; ++s)
            gx[base + s] += scale * (static_cast<double>(N) * gy[base + s] - sum_gy -
                                     xhat[base + s] * sum_gy_xhat);
        }
      } else {
        const double scale = gamma[c] * inv_std[c];
        for (int b = 0; b < B; ++b) {
          const int64_t base = (static_cast<int64_t>(b) * C + c) * spatial;
          for (int64_t s = 0; s < spatial; ++s) gx[base + s] += scale * gy[base + s];
        }
      }
    }
  };
  return out;
}

int Graph::leaky_relu(int x, double slope) {
  const Tensor& xv = val(x);
  Tensor y(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, slope]() {
    const Tensor& gy = grd(out);
    const Tensor& xv = val(x);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < xv.numel(); ++i) gx[i] += (xv[i] >= 0.0 ? 1.0 : slope) * gy[i];
  };
  return out;
}

int Graph::sigmoid(int x) {
  const Tensor& xv = val(x);
  Tensor y(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x]() {
    const Tensor& gy = grd(out);
    const Tensor& yv = val(out);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < yv.numel(); ++i) gx[i] += yv[i] * (1.0 - yv[i]) * gy[i];
  };
  return out;
}

int Graph::tanh_act(int x) {
  const Tensor& xv = val(x);
  Tensor y(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = std::tanh(xv[i]);
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x]() {
    const Tensor& gy = grd(out);
    const Tensor& yv = val(out);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < yv.numel(); ++i) gx[i] += (1.0 - yv[i] * yv[i]) * gy[i];
  };
  return out;
}

int Graph::dropout(int x, double rate) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (!training() || rate == 0.0) {
    // identity in eval mode (inverted scaling at train time)
    const Tensor& xv = val(x);
    int out = push(xv, nullptr);
    node(out).back = [this, out, x]() {
      const Tensor& gy = grd(out);
      Tensor& gx = grd(x);
      for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
    };
    return out;
  }
  require(rng_ != nullptr, "dropout: graph needs an rng in train mode");
  const Tensor& xv = val(x);
  const double keep = 1.0 - rate;
  std::vector<uint8_t> mask(static_cast<size_t>(xv.numel()));
  Tensor y(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) {
    mask[static_cast<size_t>(i)] = rng_->next_double() < keep ? 1 : 0;
    y[i] = mask[static_cast<size_t>(i)] ? xv[i] / keep : 0.0;
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, keep, mask = std::move(mask)]() {
    const Tensor& gy = grd(out);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < gy.numel(); ++i)
      if (mask[static_cast<size_t>(i)]) gx[i] += gy[i] / keep;
  };
  return out;
}

int Graph::upsample2d_nearest(int x, int factor) {
  require(factor >= 1, "upsample: factor must be >= 1");
  const Tensor& xv = val(x);
  require(xv.rank() == 4, "upsample: input must be B x C x H x W");
  const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor y({B, C, H * factor, W * factor});
  const int Ho = H * factor, Wo = W * factor;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = xv.data.data() + static_cast<int64_t>(bc) * H * W;
    double* dst = y.data.data() + static_cast<int64_t>(bc) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = src[(oy / factor) * W + ox / factor];
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, factor, B, C, H, W]() {
    const Tensor& gy = grd(out);
    Tensor& gx = grd(x);
    const int Ho = H * factor, Wo = W * factor;
    for (int bc = 0; bc < B * C; ++bc) {
      const double* src = gy.data.data() + static_cast<int64_t>(bc) * Ho * Wo;
      double* dst = gx.data.data() + static_cast<int64_t>(bc) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) dst[(oy / factor) * W + ox / factor] += src[oy * Wo + ox];
    }
  };
  return out;
}

int Graph::concat(int a, int b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  require(av.rank() == bv.rank() && av.rank() >= 2, "concat: rank mismatch");
  for (int i = 0; i < av.rank(); ++i)
    if (i != 1)
      require(av.dim(i) == bv.dim(i), "concat: non-channel dims differ, " + shape_str(av.shape) +
                                          " vs " + shape_str(bv.shape));
  const int B = av.dim(0);
  const int Ca = av.dim(1), Cb = bv.dim(1);
  int64_t spatial = 1;
  for (int i = 2; i < av.rank(); ++i) spatial *= av.dim(i);
  Shape os = av.shape;
  os[1] = Ca + Cb;
  Tensor y(os);
  for (int i = 0; i < B; ++i) {
    std::memcpy(y.data.data() + static_cast<int64_t>(i) * (Ca + Cb) * spatial,
                av.data.data() + static_cast<int64_t>(i) * Ca * spatial,
                sizeof(double) * static_cast<size_t>(Ca * spatial));
    std::memcpy(y.data.data() + (static_cast<int64_t>(i) * (Ca + Cb) + Ca) * spatial,
                bv.data.data() + static_cast<int64_t>(i) * Cb * spatial,
                sizeof(double) * static_cast<size_t>(Cb * spatial));
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, a, b, B, Ca, Cb, spatial]() {
    const Tensor& gy = grd(out);
    Tensor& ga = grd(a);
    Tensor& gb = grd(b);
    for (int i = 0; i < B; ++i) {
      const double* gya = gy.data.data() + static_cast<int64_t>(i) * (Ca + Cb) * spatial;
      const double* gyb = gya + static_cast<int64_t>(Ca) * spatial;
      double* pa = ga.data.data() + static_cast<int64_t>(i) * Ca * spatial;
      double* pb = gb.data.data() + static_cast<int64_t>(i) * Cb * spatial;
      for (int64_t j = 0; j < Ca * spatial; ++j) pa[j] += gya[j];
      for (int64_t j = 0; j < Cb * spatial; ++j) pb[j] += gyb[j];
    }
  };
  return out;
}

int Graph::add(int a, int b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  require(av.same_shape(bv), "add: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor y(av.shape);
  for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] + bv[i];
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, a, b]() {
    const Tensor& gy = grd(out);
    Tensor& ga = grd(a);
    Tensor& gb = grd(b);
    for (int64_t i = 0; i < gy.numel(); ++i) {
      ga[i] += gy[i];
      gb[i] += gy[i];
    }
  };
  return out;
}

int Graph::scale(int x, double k) {
  const Tensor& xv = val(x);
  Tensor y(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) y[i] = k * xv[i];
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, k]() {
    const Tensor& gy = grd(out);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += k * gy[i];
  };
  return out;
}

int Graph::reshape(int x, Shape shape) {
  const Tensor& xv = val(x);
  require(shape_numel(shape) == xv.numel(), "reshape: element count mismatch");
  Tensor y(shape, xv.data);
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x]() {
    const Tensor& gy = grd(out);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
  };
  return out;
}

int Graph::broadcast_rows(int x, int rows) {
  const Tensor& xv = val(x);
  require(xv.rank() == 2 && xv.dim(0) == 1, "broadcast_rows: input must be 1 x C");
  const int C = xv.dim(1);
  Tensor y({rows, C});
  for (int r = 0; r < rows; ++r)
    std::memcpy(y.data.data() + static_cast<int64_t>(r) * C, xv.data.data(),
                sizeof(double) * static_cast<size_t>(C));
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, rows, C]() {
    const Tensor& gy = grd(out);
    Tensor& gx = grd(x);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < C; ++c) gx[c] += gy[static_cast<int64_t>(r) * C + c];
  };
  return out;
}

int Graph::slice_rows(int x, int row_begin, int row_end) {
  const Tensor& xv = val(x);
  require(xv.rank() == 2, "slice_rows: rank-2 only");
  require(0 <= row_begin && row_begin < row_end && row_end <= xv.dim(0), "slice_rows: bad range");
  const int cols = xv.dim(1);
  Tensor y({row_end - row_begin, cols});
  std::memcpy(y.data.data(), xv.data.data() + static_cast<int64_t>(row_begin) * cols,
              sizeof(double) * y.data.size());
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, row_begin, cols]() {
    const Tensor& gy = grd(out);
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[static_cast<int64_t>(row_begin) * cols + i] += gy[i];
  };
  return out;
}

int Graph::normalize_vec3(int x) {
  const Tensor& xv = val(x);
  require(xv.rank() == 4 && xv.dim(1) == 3, "normalize_vec3: input must be B x 3 x H x W");
  const int B = xv.dim(0);
  const int64_t HW = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
  Tensor y(xv.shape);
  std::vector<double> inv_norm(static_cast<size_t>(B * HW));
  for (int b = 0; b < B; ++b) {
    const int64_t base = static_cast<int64_t>(b) * 3 * HW;
    for (int64_t s = 0; s < HW; ++s) {
      const double vx = xv[base + s], vy = xv[base + HW + s], vz = xv[base + 2 * HW + s];
      const double n = std::max(std::sqrt(vx * vx + vy * vy + vz * vz), 1e-12);
      const double in = 1.0 / n;
      inv_norm[static_cast<size_t>(b * HW + s)] = in;
      y[base + s] = vx * in;
      y[base + HW + s] = vy * in;
      y[base + 2 * HW + s] = vz * in;
    }
  }
  int out = push(std::move(y), nullptr);
  node(out).back = [this, out, x, B, HW, inv_norm = std::move(inv_norm)]() {
    const Tensor& gy = grd(out);
    const Tensor& yv = val(out);
    Tensor& gx = grd(x);
    for (int b = 0; b < B; ++b) {
      const int64_t base = static_cast<int64_t>(b) * 3 * HW;
      for (int64_t s = 0; s < HW; ++s) {
        const double nx = yv[base + s], ny = yv[base + HW + s], nz = yv[base + 2 * HW + s];
        const double gx0 = gy[base + s], gy0 = gy[base + HW + s], gz0 = gy[base + 2 * HW + s];
        const double dot = nx * gx0 + ny * gy0 + nz * gz0;
        const double in = inv_norm[static_cast<size_t>(b * HW + s)];
        gx[base + s] += (gx0 - nx * dot) * in;
        gx[base + HW + s] += (gy0 - ny * dot) * in;
        gx[base + 2 * HW + s] += (gz0 - nz * dot) * in;
      }
    }
  };
  return out;
}

int Graph::sum(int x) {
  const Tensor& xv = val(x);
  double s = 0.0;
  for (double v : xv.data) s += v;
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, x]() {
    const double g = grd(out)[0];
    Tensor& gx = grd(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  };
  return out;
}

int Graph::mse_mean(int pred, int target) {
  const Tensor& p = val(pred);
  const Tensor& t = val(target);
  require(p.same_shape(t), "mse: shape mismatch");
  const double n = static_cast<double>(p.numel());
  double s = 0.0;
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  int out = push(Tensor({1}, {s / n}), nullptr);
  node(out).back = [this, out, pred, target, n]() {
    const double g = grd(out)[0];
    const Tensor& p = val(pred);
    const Tensor& t = val(target);
    Tensor& gp = grd(pred);
    Tensor& gt = grd(target);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double d = 2.0 * (p[i] - t[i]) / n * g;
      gp[i] += d;
      gt[i] -= d;
    }
  };
  return out;
}

int Graph::masked_l1_sum(int pred, int gt, int mask) {
  const Tensor& p = val(pred);
  const Tensor& t = val(gt);
  const Tensor& m = val(mask);
  require(p.same_shape(t) && p.same_shape(m), "masked_l1: shape mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < p.numel(); ++i) s += std::abs(p[i] - t[i]) * m[i];
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, pred, gt, mask]() {
    const double g = grd(out)[0];
    const Tensor& p = val(pred);
    const Tensor& t = val(gt);
    const Tensor& m = val(mask);
    Tensor& gp = grd(pred);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double d = p[i] - t[i];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      gp[i] += sgn * m[i] * g;
    }
  };
  return out;
}

int Graph::masked_cosine_sum(int pred, int gt, int mask) {
  const Tensor& p = val(pred);
  const Tensor& t = val(gt);
  const Tensor& m = val(mask);
  require(p.rank() == 4 && p.dim(1) == 3, "masked_cosine: pred must be B x 3 x H x W");
  require(p.same_shape(t), "masked_cosine: shape mismatch");
  const int B = p.dim(0);
  const int64_t HW = static_cast<int64_t>(p.dim(2)) * p.dim(3);
  require(m.numel() == B * HW, "masked_cosine: mask shape mismatch");
  double s = 0.0;
  for (int b = 0; b < B; ++b) {
    const int64_t base = static_cast<int64_t>(b) * 3 * HW;
    for (int64_t i = 0; i < HW; ++i) {
      const double dot = p[base + i] * t[base + i] + p[base + HW + i] * t[base + HW + i] +
                         p[base + 2 * HW + i] * t[base + 2 * HW + i];
      s += (1.0 - dot) * m[static_cast<int64_t>(b) * HW + i];
    }
  }
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, pred, gt, mask, B, HW]() {
    const double g = grd(out)[0];
    const Tensor& t = val(gt);
    const Tensor& m = val(mask);
    Tensor& gp = grd(pred);
    for (int b = 0; b < B; ++b) {
      const int64_t base = static_cast<int64_t>(b) * 3 * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const double w = m[static_cast<int64_t>(b) * HW + i] * g;
        gp[base + i] -= t[base + i] * w;
        gp[base + HW + i] -= t[base + HW + i] * w;
        gp[base + 2 * HW + i] -= t[base + 2 * HW + i] * w;
      }
    }
  };
  return out;
}

int Graph::bce_sum(int pred, int gt) {
  const Tensor& p = val(pred);
  const Tensor& t = val(gt);
  require(p.same_shape(t), "bce: shape mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double pc = clamp_prob(p[i]);
    s += -(t[i] * std::log(pc) + (1.0 - t[i]) * std::log(1.0 - pc));
  }
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, pred, gt]() {
    const double g = grd(out)[0];
    const Tensor& p = val(pred);
    const Tensor& t = val(gt);
    Tensor& gp = grd(pred);
    for (int64_t i = 0; i < p.numel(); ++i) {
      if (p[i] <= kProbClamp || p[i] >= 1.0 - kProbClamp) continue;  // clamped: zero subgradient
      gp[i] += g * (p[i] - t[i]) / (p[i] * (1.0 - p[i]));
    }
  };
  return out;
}

int Graph::gan_generator_loss(int d_fake) {
  const Tensor& d = val(d_fake);
  double s = 0.0;
  for (int64_t i = 0; i < d.numel(); ++i) s += -std::log(clamp_prob(d[i]));
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, d_fake]() {
    const double g = grd(out)[0];
    const Tensor& d = val(d_fake);
    Tensor& gd = grd(d_fake);
    for (int64_t i = 0; i < d.numel(); ++i) {
      if (d[i] <= kProbClamp) continue;
      gd[i] += -g / std::min(d[i], 1.0 - kProbClamp);
    }
  };
  return out;
}

int Graph::gan_discriminator_loss(int d_real, int d_fake) {
  const Tensor& dr = val(d_real);
  const Tensor& df = val(d_fake);
  double s = 0.0;
  for (int64_t i = 0; i < dr.numel(); ++i) s += -std::log(clamp_prob(dr[i]));
  for (int64_t i = 0; i < df.numel(); ++i) s += -std::log(clamp_prob(1.0 - df[i]));
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, d_real, d_fake]() {
    const double g = grd(out)[0];
    const Tensor& dr = val(d_real);
    const Tensor& df = val(d_fake);
    Tensor& gr = grd(d_real);
    Tensor& gf = grd(d_fake);
    for (int64_t i = 0; i < dr.numel(); ++i)
      if (dr[i] > kProbClamp) gr[i] += -g / std::min(dr[i], 1.0 - kProbClamp);
    for (int64_t i = 0; i < df.numel(); ++i)
      if (df[i] < 1.0 - kProbClamp) gf[i] += g / std::max(1.0 - df[i], kProbClamp);
  };
  return out;
}

int Graph::weighted_mse(int pred, int labels, int weights) {
  const Tensor& p = val(pred);
  const Tensor& f = val(labels);
  const Tensor& w = val(weights);
  require(p.numel() == f.numel() && p.numel() == w.numel(), "weighted_mse: size mismatch");
  require(p.numel() > 0, "weighted_mse: empty point set");
  double wsum = 0.0, s = 0.0;
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double d = p[i] - f[i];
    s += d * d * w[i];
    wsum += w[i];
  }
  int out = push(Tensor({1}, {s / wsum}), nullptr);
  node(out).back = [this, out, pred, labels, weights, wsum]() {
    const double g = grd(out)[0];
    const Tensor& p = val(pred);
    const Tensor& f = val(labels);
    const Tensor& w = val(weights);
    Tensor& gp = grd(pred);
    for (int64_t i = 0; i < p.numel(); ++i) gp[i] += g * 2.0 * (p[i] - f[i]) * w[i] / wsum;
  };
  return out;
}

int Graph::weighted_sum(const std::vector<std::pair<int, double>>& terms) {
  double s = 0.0;
  for (auto [id, w] : terms) {
    require(val(id).numel() == 1, "weighted_sum: terms must be scalars");
    s += w * val(id)[0];
  }
  int out = push(Tensor({1}, {s}), nullptr);
  node(out).back = [this, out, terms]() {
    const double g = grd(out)[0];
    for (auto [id, w] : terms) grd(id)[0] += w * g;
  };
  return out;
}

void Graph::backward(int loss_id) {
  require(val(loss_id).numel() == 1, "backward: loss must be scalar, got shape " +
                                         shape_str(val(loss_id).shape));
  grd(loss_id)[0] = 1.0;
  for (int i = loss_id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.back) n.back();
  }
  if (store_) {
    for (const Node& n : nodes_) {
      if (!n.param_name.empty()) store_->accumulate_grad(n.param_name, n.grad);
    }
  }
}

}  // namespace s2m
