#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "structmark/geom.hpp"
#include "structmark/tensor.hpp"

namespace structmark::net {

// Radial-basis feature layout: for each residue, one block per sequence
// neighbor at offsets -k_half..-1, +1..+k_half, each block = n_rbf Gaussian
// responses of the Calpha distance plus a validity flag. Features depend
// only on inter-Calpha distances and relative sequence offsets, hence are
// exactly invariant under rigid motion.
struct FeaturePlan {
  int k_half = 8;
  int n_rbf = 16;
  double rbf_min = 0.0;
  double rbf_max = 20.0;
  double rbf_width = 1.25;

  int feature_dim() const { return 2 * k_half * (n_rbf + 1); }
  double center(int j) const {
    return rbf_min + j * (rbf_max - rbf_min) / (n_rbf - 1);
  }
};

// Tape-free forward of the same computation (for frozen inputs / tests).
Tensor rbf_feature_values(const Tensor& coords, const FeaturePlan& plan);

// Reverse-mode autodiff over an explicit tape. Nodes are created in
// topological order; backward walks them in reverse. Leaves are constants,
// differentiable inputs, or Parameter bindings (grads accumulate into
// Parameter::grad).
class Tape {
 public:
  using Id = int;

  Id constant(Tensor v);
  Id param(Parameter* p);
  Id input(Tensor v);

  // y = x * W^T + b; W: [out x in], b: [out]
  Id linear(Id x, Id w, Id b);
  // y = a * b or a * b^T
  Id matmul(Id a, Id b, bool trans_b = false);
  // y = W * v; W: [n x m], v: [m] -> y: [n]
  Id matvec(Id w, Id v);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  // a + s * b
  Id add_scaled(Id a, Id b, double s);
  // rows of a shifted by row vector v: [1 x d] or [d]
  Id row_broadcast_add(Id a, Id v);
  // row i of a scaled by g[i]
  Id row_scale(Id a, Id g);
  Id tanh_(Id a);
  Id softmax_rows(Id a);
  Id col_slice(Id a, int off, int len);
  Id row_slice(Id a, int off, int len);
  Id concat_cols(const std::vector<Id>& parts);
  // [n x d] -> [1 x d]
  Id mean_rows(Id a);
  // relative-offset attention bias: out[i][j] = table[head][clip(j-i)+clip]
  Id pair_bias(Id table, int head, int n, int clip);
  // invariant per-residue features of coords [n x 3]
  Id rbf_features(Id coords, const FeaturePlan& plan);
  // out_i = frames[i] * raw_i (frames constant, proper rotations)
  Id frame_apply(Id raw, const std::vector<geom::Mat3>& frames);
  // y_i = R * x_i + t
  Id rigid_apply(Id x, const geom::Mat3& rot, const geom::Vec3& trans);
  // scalar: mean over bits of stable BCE-with-logits against 0/1 targets
  Id bce_with_logits(Id logits, const Tensor& targets);
  // scalar: (1/rows) * sum of squared differences
  Id mse_rows(Id a, Id b);
  // scalar: (1/rows) * sum of row Euclidean norms; subgradient 0 at 0
  Id mean_row_norm(Id a);
  // scalar: sum of w_i * s_i over scalar nodes
  Id weighted_sum(const std::vector<std::pair<Id, double>>& terms);

  const Tensor& val(Id id) const { return nodes_[id].value; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }

  // Seeds d(root)=1 (root must be scalar), walks the tape in reverse and
  // accumulates leaf gradients into bound Parameters.
  void backward(Id root);

  // Gradient of a leaf created with input(); zeros if backward never reached it.
  Tensor input_grad(Id id) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_live = false;
    Parameter* bound = nullptr;
    std::function<void()> back;
  };

  std::vector<Node> nodes_;

  Id push(Tensor value, bool needs_grad);
  Tensor& grad_buf(Id id);
  bool live(Id id) const { return nodes_[id].grad_live; }
};

// Sinusoidal embedding of an integer step (transformer-style), shape [1 x dim].
Tensor sinusoidal_embedding(int t, int dim);

}  // namespace structmark::net
