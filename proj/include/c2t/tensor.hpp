#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
//
// Every op allocates a Node holding its value and, when any input requires a
// gradient, a closure that pushes the output gradient back to its inputs.
// Graphs live as long as the Tensors that reference them; parameters are
// leaves and keep accumulating gradients until zero_grad().

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace c2t {

class Rng;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
// true = the query row may attend to the key column.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  std::uint64_t id = 0;

  // Zero-initialised on first use.
  Matrix& grad_ref();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // In-place access for optimizers and checkpoint loading. Do not use on
  // graph intermediates.
  Matrix& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  Index size() const { return node_->value.size(); }
  std::uint64_t id() const { return node_->id; }
  double item() const;

  // Seeds d(this)/d(this) = 1 and propagates through the graph once.
  void backward() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Adds a 1 x n row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
// Adds a fixed, non-differentiable matrix (positional encodings, biases).
Tensor add_constant(const Tensor& a, const Matrix& c);

Tensor relu(const Tensor& a);

// Row-wise softmax over the last axis. Throws on non-finite input.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

// Normalises each row, then applies gain and bias (both 1 x cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor slice_rows(const Tensor& a, Index start, Index count);

// Row lookup into an embedding table.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Scaled dot-product attention over `heads` column blocks of q, k, v.
// q: Tq x (heads*dk), k: Tk x (heads*dk), v: Tk x (heads*dv).
// Masked entries get zero weight; a query row with no attendable key throws.
// When `weights` is non-null it receives one Tq x Tk matrix per head.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 const Mask* mask, std::vector<Matrix>* weights = nullptr);

// Mean token cross-entropy of row-wise logits against targets. Targets equal
// to `ignore_index` contribute nothing and are excluded from the mean.
// With label_smoothing > 0 the target distribution is
// (1 - s) * onehot + s / cols.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index = -1,
                     double label_smoothing = 0.0);

// Summed (not averaged) variant for callers that normalise across a batch.
Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets,
                         int ignore_index = -1, double label_smoothing = 0.0);

// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

}  // namespace nn
}  // namespace c2t
