#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "mtlink/errors.hpp"
#include "mtlink/rng.hpp"

namespace mtlink {

/// Dense row-major shape; rank 0 denotes a scalar of size 1.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& s);

class GradStore;

namespace detail {

/// One tape node: value buffer plus the reverse rule that pushes this node's
/// upstream gradient into its parents. Leaves (parameters, constants) have no
/// parents. The tape is the DAG formed by parent links; backward() visits each
/// reachable node exactly once in reverse topological order.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily; same length as value once used
  bool requires_grad = false;
  bool backward_ran = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&, GradStore*)> backward_fn;

  bool is_param_leaf() const { return requires_grad && parents.empty(); }
  std::vector<double>& grad_buf() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Destination buffer for a gradient contribution to `target`: the node's own
/// grad, unless a GradStore redirects leaf-parameter gradients (used for
/// batch-parallel backward over shared parameters).
std::vector<double>& grad_dest(Node& target, GradStore* sink);

}  // namespace detail

/// Collects leaf-parameter gradients outside the parameter tensors themselves,
/// so several tapes sharing the same parameters can run backward concurrently.
class GradStore {
 public:
  std::vector<double>& buffer_for(const detail::Node* node, std::size_t n) {
    auto& buf = bufs_[node];
    if (buf.size() != n) buf.assign(n, 0.0);
    return buf;
  }

  const std::vector<double>* find(const detail::Node* node) const {
    auto it = bufs_.find(node);
    return it == bufs_.end() ? nullptr : &it->second;
  }

  void clear() { bufs_.clear(); }

 private:
  std::unordered_map<const detail::Node*, std::vector<double>> bufs_;
};

/// Dense tensor of 64-bit floats with reverse-mode automatic differentiation.
/// Copying a Tensor copies a handle to the shared node, not the data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double sd, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  /// Rank-2 helpers; rank-1 tensors count as a single row.
  std::size_t rows() const { return rank() == 2 ? dim(0) : 1; }
  std::size_t cols() const { return rank() == 2 ? dim(1) : size(); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access to the raw buffer. Intended for leaf tensors (parameter
  /// init, optimizer updates); mutating a mid-tape value invalidates saved
  /// activations.
  std::span<double> values_mut() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const;
  std::span<double> grad_mut() { return node_->grad_buf(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const;

  /// Value copy with no tape history and no gradient requirement.
  Tensor detach() const;

  /// Reverse-mode sweep from a scalar. Populates .grad of every requires_grad
  /// ancestor. A second call on the same loss without rebuilding the graph is
  /// rejected.
  void backward();
  /// Same sweep, but leaf-parameter gradients go into `sink` instead of the
  /// parameter tensors (thread-safe against other tapes doing the same).
  void backward(GradStore& sink);

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  void backward_impl(GradStore* sink);
  std::shared_ptr<detail::Node> node_;
};

// ---- Differentiable operations -------------------------------------------

/// Matrix product [m×k]·[k×n] -> [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum; also supports broadcasting a rank-1 [d] bias over the rows
/// of a rank-2 [k×d] tensor (in either argument order).
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise (Hadamard) product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply every element by a constant.
Tensor scale(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// 2-D transpose.
Tensor transpose(const Tensor& x);

/// Same data, new shape of equal size.
Tensor reshape(const Tensor& x, Shape shape);

/// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);

/// Concatenate along the last axis. Inputs must agree on every other axis.
Tensor concat_last(const std::vector<Tensor>& xs);
Tensor concat_last(const Tensor& a, const Tensor& b);

/// Columns [off, off+len) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t off, std::size_t len);

/// Row-stochastic masked softmax over the last axis. Invalid positions get
/// exactly 0; valid positions are exp-normalized with max subtraction. Every
/// row must have at least one valid position.
Tensor softmax_masked(const Tensor& x, const std::vector<std::uint8_t>& valid);

/// Per-row standardization over the last axis (epsilon 1e-5) followed by an
/// affine map with learnable gain and bias of size d.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Train-mode inverted dropout (Bernoulli keep with 1/keep scaling); identity
/// when `training` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

/// Gather rows of `table` [V×d] by token id; backward scatter-adds into the
/// table gradient.
Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids);

/// Mean over valid rows of a [k×d] tensor -> [d]. At least one row must be
/// valid.
Tensor masked_mean(const Tensor& x, const std::vector<std::uint8_t>& valid_rows);

/// Zero out invalid rows of a [k×d] tensor; valid rows pass through.
Tensor row_mask(const Tensor& x, const std::vector<std::uint8_t>& valid_rows);

/// Stack N scalar tensors into a rank-1 [N] tensor.
Tensor stack_scalars(const std::vector<Tensor>& xs);

/// Mean weighted binary cross-entropy over a probability vector. Probabilities
/// are clamped to [1e-7, 1-1e-7]; weight w_pos applies where label==1, w_neg
/// where label==0.
Tensor weighted_bce(const Tensor& probs, const std::vector<int>& labels, double w_pos,
                    double w_neg);

/// Single-sample term of the same loss with an externally supplied weight
/// (already divided by the batch size). Summing these over a batch equals
/// weighted_bce on the stacked probabilities.
Tensor bce_term(const Tensor& prob, int label, double weight);

/// Learnable cosine time encoding: out[i][j] = cos(w[j]*t[i] + b[j]) / sqrt(d).
Tensor temporal_encoding(const Tensor& freq, const Tensor& phase, const std::vector<double>& t);

/// Replace the given rows of Z [k×d] with the learnable vector `fill` [d].
/// Gradient flows to `fill` from the replaced rows only.
Tensor replace_rows(const Tensor& z, const std::vector<std::size_t>& rows, const Tensor& fill);

// ---- Constants -------------------------------------------------------------

/// Fixed sinusoidal position encoding table [k×d] (no gradient).
Tensor sinusoidal_position_encoding(std::size_t k, std::size_t d);

}  // namespace mtlink
