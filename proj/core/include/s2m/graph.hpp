#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "s2m/param_store.hpp"
#include "s2m/tensor.hpp"

namespace s2m {

// Reverse-mode tape. Nodes are recorded in execution order during the
// forward pass; backward() walks the exact reverse order and accumulates
// parameter gradients into the bound ParamStore.
class Graph {
 public:
  enum class Mode { kTrain, kEval };

  Graph(ParamStore* store, Mode mode, Rng* rng = nullptr)
      : store_(store), mode_(mode), rng_(rng) {}

  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::kTrain; }

  // ---- leaves ----
  int input(Tensor t);                    // constant, no gradient
  int input_grad(Tensor t);               // non-parameter leaf that collects a gradient (e.g. latent codes)
  int param(const std::string& name);     // must already exist in the store

  // ---- layers ----
  int dense(int x, const std::string& w_name, const std::string& b_name = "");
  int conv2d(int x, const std::string& w_name, const std::string& b_name, int stride, int pad);
  int conv3d(int x, const std::string& w_name, const std::string& b_name, int stride, int pad);
  int batchnorm(int x, const std::string& prefix, double momentum = 0.9, double eps = 1e-5);
  int leaky_relu(int x, double slope = 0.2);
  int sigmoid(int x);
  int tanh_act(int x);
  int dropout(int x, double rate);
  int upsample2d_nearest(int x, int factor);
  int concat(int a, int b);               // channel axis for rank 4/5, axis 1 for rank 2
  int add(int a, int b);
  int scale(int x, double k);
  int reshape(int x, Shape shape);
  int broadcast_rows(int x, int rows);    // tile a 1 x C row to rows x C; backward sums
  int slice_rows(int x, int row_begin, int row_end);  // rank-2 row slice
  int normalize_vec3(int x);              // unit-normalize 3-channel pixel vectors (B x 3 x H x W)

  // ---- losses (scalar outputs) ----
  int sum(int x);
  int mse_mean(int pred, int target);
  int masked_l1_sum(int pred, int gt, int mask);
  int masked_cosine_sum(int pred, int gt, int mask);  // sum of (1 - pred . gt) * mask
  int bce_sum(int pred, int gt);                      // pred clamped to [1e-7, 1-1e-7]
  int gan_generator_loss(int d_fake);                 // -sum log D(fake)
  int gan_discriminator_loss(int d_real, int d_fake); // -sum [log D(real) + log(1 - D(fake))]
  int weighted_mse(int pred, int labels, int weights);
  int weighted_sum(const std::vector<std::pair<int, double>>& terms);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  // Populates store gradients for every parameter leaf reachable from loss.
  // Unused registered parameters keep whatever is in the store (zero after
  // zero_grad()).
  void backward(int loss_id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // empty for leaves without inputs
    std::string param_name;      // non-empty for parameter leaves
  };

  int push(Tensor value, std::function<void()> back = {}, std::string pname = {});
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  Tensor& val(int id) { return nodes_[static_cast<size_t>(id)].value; }
  Tensor& grd(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  void check_finite(int id, const char* op) const;

  ParamStore* store_;
  Mode mode_;
  Rng* rng_;
  // deque: references to node values stay valid while later nodes are pushed
  std::deque<Node> nodes_;
};

// y = A[MxK] * B[KxN] accumulated into C (row-major).
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
// C += A^T * B with A[KxM], B[KxN].
void matmul_at_b_acc(const double* a, const double* b, double* c, int m, int k, int n);
// C += A * B^T with A[MxK], B[NxK].
void matmul_a_bt_acc(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace s2m
