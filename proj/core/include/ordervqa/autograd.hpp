// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense double matrices. Every
// learned model in the toolkit (pairwise comparator, composition model,
// grounding model) is written against this; finite-difference tests check
// each op and each model block.
//
// A Var is a shared handle to a graph node. Ops build new nodes that keep
// their inputs alive; calling backward() on a scalar result accumulates
// gradients into every reachable node that requires them. Parameters are
// leaf Vars that persist across steps and are cleared with zero_grad().

#ifndef ORDERVQA_AUTOGRAD_HPP_
#define ORDERVQA_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ordervqa::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// grad, allocated to zeros on first use.
  Matrix& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Accumulated gradient; zeros if none has been accumulated.
  Matrix grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Builds a node from `value` whose gradient flows to `parents` via `fn`.
  static Var make(Matrix value, std::vector<Var> parents,
                  std::function<void(Node&)> fn);

 private:
  std::shared_ptr<Node> node_;
};

/// Constant (no gradient).
Var constant(Matrix value);
/// Trainable leaf.
Var parameter(Matrix value);

/// Backpropagates d(root)/d(node) into every reachable node. `root` must be
/// 1x1.
void backward(const Var& root);

// Linear algebra and elementwise ops. Shapes must match unless noted.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Adds a 1xC row to every row of a RxC matrix.
Var add_row(const Var& a, const Var& row);
Var sub_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);
Var div_row(const Var& a, const Var& row);
/// Repeats a 1xC row `n` times.
Var repeat_rows(const Var& row, Eigen::Index n);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a.
Var one_minus(const Var& a);

Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
/// Elementwise clamp; gradient is zero where the clamp is active.
Var clamp(const Var& a, double lo, double hi);
/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
Var smooth_l1(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index n);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n);
/// Rows of `a` selected by `index` (repeats allowed); gradient scatters back.
Var gather_rows(const Var& a, std::span<const int> index);
/// Entries a(r, c) for each (r, c), as a column.
Var gather_entries(const Var& a, std::span<const std::pair<int, int>> index);

/// Same entries read in row-major order into a rows x cols matrix.
Var reshape_row_major(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var transpose(const Var& a);

/// 1xC column means.
Var mean_rows(const Var& a);
/// 1x1 sum of every entry.
Var sum(const Var& a);
/// 1x1 mean of every entry.
Var mean(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Scales each row to unit L2 norm (norm floored at eps).
Var normalize_rows(const Var& a, double eps = 1e-12);
/// Mean binary cross-entropy between sigmoid(logits) and targets, computed
/// stably from logits. 1x1.
Var bce_with_logits(const Var& logits, const Matrix& targets);

/// Gathers strided temporal windows: output row i concatenates input rows
/// i*stride - pad + j for j in [0, kernel), zero outside [0, rows). Output
/// has `out_rows` rows and kernel*cols columns.
Var im2col(const Var& a, int kernel, int stride, int pad, Eigen::Index out_rows);

/// Adam with bias correction; optional global-norm gradient clipping.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double max_grad_norm = 0.0;  // 0 disables clipping
  };

  Adam(std::vector<Var> params, Options options);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  long long steps_taken() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Matrix> m_, v_;
  Options options_;
  long long t_ = 0;
};

}  // namespace ordervqa::nn

#endif  // ORDERVQA_AUTOGRAD_HPP_
