// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/autograd.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ordervqa::nn {

Matrix& Node::grad_buffer() {
  if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
  return grad;
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) {
    return Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Var Var::make(Matrix value, std::vector<Var> parents,
              std::function<void(Node&)> fn) {
  Var out(std::move(value));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(fn);
  }
  return out;
}

Var constant(Matrix value) { return Var(std::move(value), false); }
Var parameter(Matrix value) { return Var(std::move(value), true); }

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("backward() needs a 1x1 root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

namespace {

inline void accumulate(const std::shared_ptr<Node>& parent, const Matrix& g) {
  if (parent->requires_grad) parent->grad_buffer() += g;
}

template <typename Expr>
inline void accumulate_expr(const std::shared_ptr<Node>& parent, const Expr& g) {
  if (parent->requires_grad) parent->grad_buffer() += g;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

void check_row(const Var& a, const Var& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument(std::string(op) + ": expected a 1x" +
                                std::to_string(a.cols()) + " row");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  return Var::make(a.value() * b.value(), {a, b}, [](Node& self) {
    const auto& A = self.parents[0];
    const auto& B = self.parents[1];
    if (A->requires_grad) A->grad_buffer().noalias() += self.grad * B->value.transpose();
    if (B->requires_grad) B->grad_buffer().noalias() += A->value.transpose() * self.grad;
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return Var::make(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    accumulate(self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return Var::make(a.value() - b.value(), {a, b}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    accumulate_expr(self.parents[1], -self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return Var::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    const auto& A = self.parents[0];
    const auto& B = self.parents[1];
    accumulate_expr(A, self.grad.cwiseProduct(B->value));
    accumulate_expr(B, self.grad.cwiseProduct(A->value));
  });
}

Var add_row(const Var& a, const Var& row) {
  check_row(a, row, "add_row");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return Var::make(std::move(out), {a, row}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    accumulate_expr(self.parents[1], self.grad.colwise().sum());
  });
}

Var sub_row(const Var& a, const Var& row) {
  check_row(a, row, "sub_row");
  Matrix out = a.value().rowwise() - row.value().row(0);
  return Var::make(std::move(out), {a, row}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    accumulate_expr(self.parents[1], -self.grad.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  check_row(a, row, "mul_row");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return Var::make(std::move(out), {a, row}, [](Node& self) {
    const auto& A = self.parents[0];
    const auto& R = self.parents[1];
    if (A->requires_grad) {
      A->grad_buffer().array() += self.grad.array().rowwise() * R->value.row(0).array();
    }
    if (R->requires_grad) {
      R->grad_buffer() += self.grad.cwiseProduct(A->value).colwise().sum();
    }
  });
}

Var div_row(const Var& a, const Var& row) {
  check_row(a, row, "div_row");
  Matrix out = a.value().array().rowwise() / row.value().row(0).array();
  return Var::make(std::move(out), {a, row}, [](Node& self) {
    const auto& A = self.parents[0];
    const auto& R = self.parents[1];
    if (A->requires_grad) {
      A->grad_buffer().array() += self.grad.array().rowwise() / R->value.row(0).array();
    }
    if (R->requires_grad) {
      Eigen::ArrayXXd t = self.grad.array() * A->value.array();
      t.rowwise() /= R->value.row(0).array().square();
      R->grad_buffer() -= t.matrix().colwise().sum();
    }
  });
}

Var repeat_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) throw std::invalid_argument("repeat_rows: expected a row");
  Matrix out = row.value().replicate(n, 1);
  return Var::make(std::move(out), {row}, [](Node& self) {
    accumulate_expr(self.parents[0], self.grad.colwise().sum());
  });
}

Var scale(const Var& a, double s) {
  return Var::make(a.value() * s, {a}, [s](Node& self) {
    accumulate_expr(self.parents[0], self.grad * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return Var::make(std::move(out), {a}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
  });
}

Var one_minus(const Var& a) {
  Matrix out = 1.0 - a.value().array();
  return Var::make(std::move(out), {a}, [](Node& self) {
    accumulate_expr(self.parents[0], -self.grad);
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) {
      A->grad_buffer().array() +=
          (A->value.array() > 0.0).cast<double>() * self.grad.array();
    }
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh();
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) {
      A->grad_buffer().array() += self.grad.array() * (1.0 - self.value.array().square());
    }
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) {
      A->grad_buffer().array() +=
          self.grad.array() * self.value.array() * (1.0 - self.value.array());
    }
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return Var::make(std::move(out), {a}, [](Node& self) {
    accumulate_expr(self.parents[0], self.grad.cwiseProduct(self.value));
  });
}

Var log(const Var& a) {
  Matrix out = a.value().array().log();
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer().array() += self.grad.array() / A->value.array();
  });
}

Var square(const Var& a) {
  Matrix out = a.value().array().square();
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer().array() += 2.0 * A->value.array() * self.grad.array();
  });
}

Var sqrt(const Var& a) {
  Matrix out = a.value().array().sqrt();
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) {
      A->grad_buffer().array() += self.grad.array() / (2.0 * self.value.array());
    }
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return Var::make(std::move(out), {a}, [lo, hi](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) {
      auto inside = (A->value.array() >= lo && A->value.array() <= hi).cast<double>();
      A->grad_buffer().array() += inside * self.grad.array();
    }
  });
}

Var smooth_l1(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  });
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) {
      Matrix d = A->value.unaryExpr([](double x) {
        if (std::abs(x) < 1.0) return x;
        return x > 0 ? 1.0 : -1.0;
      });
      A->grad_buffer() += d.cwiseProduct(self.grad);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const auto rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Var::make(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                   [](Node& self) {
                     Eigen::Index at = 0;
                     for (const auto& p : self.parents) {
                       const auto c = p->value.cols();
                       accumulate_expr(p, self.grad.middleCols(at, c));
                       at += c;
                     }
                   });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const auto cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Var::make(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                   [](Node& self) {
                     Eigen::Index at = 0;
                     for (const auto& p : self.parents) {
                       const auto r = p->value.rows();
                       accumulate_expr(p, self.grad.middleRows(at, r));
                       at += r;
                     }
                   });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) {
    throw std::invalid_argument("slice_rows: out of range");
  }
  return Var::make(a.value().middleRows(start, n), {a}, [start, n](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer().middleRows(start, n) += self.grad;
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) {
    throw std::invalid_argument("slice_cols: out of range");
  }
  return Var::make(a.value().middleCols(start, n), {a}, [start, n](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer().middleCols(start, n) += self.grad;
  });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw std::invalid_argument("gather_rows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return Var::make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    auto& g = A->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var gather_entries(const Var& a, std::span<const std::pair<int, int>> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto [r, c] = index[i];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
      throw std::invalid_argument("gather_entries: index out of range");
    }
    out(static_cast<Eigen::Index>(i), 0) = a.value()(r, c);
  }
  std::vector<std::pair<int, int>> idx(index.begin(), index.end());
  return Var::make(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    auto& g = A->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g(idx[i].first, idx[i].second) += self.grad(static_cast<Eigen::Index>(i), 0);
    }
  });
}

Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().mean();
  return Var::make(std::move(out), {a}, [n](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    A->grad_buffer().rowwise() += self.grad.row(0) / n;
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer().array() += self.grad(0, 0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return Var::make(std::move(out), {a}, [n](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer().array() += self.grad(0, 0) / n;
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    const Eigen::VectorXd dot = self.grad.cwiseProduct(self.value).rowwise().sum();
    Matrix g = self.grad;
    g.colwise() -= dot;
    A->grad_buffer() += g.cwiseProduct(self.value);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return Var::make(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    const Matrix soft = self.value.array().exp();
    const Eigen::VectorXd gsum = self.grad.rowwise().sum();
    Matrix g = self.grad;
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) -= soft.row(r) * gsum(r);
    A->grad_buffer() += g;
  });
}

Var normalize_rows(const Var& a, double eps) {
  Eigen::VectorXd norms = a.value().rowwise().norm().cwiseMax(eps);
  Matrix out = a.value().array().colwise() / norms.array();
  return Var::make(std::move(out), {a}, [norms, eps](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    Matrix g = self.grad;
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (A->value.row(r).norm() > eps) {
        const double d = self.grad.row(r).dot(self.value.row(r));
        g.row(r) -= d * self.value.row(r);
      }
      g.row(r) /= norms(r);
    }
    A->grad_buffer() += g;
  });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw std::invalid_argument("bce_with_logits: shape mismatch");
  }
  const auto& x = logits.value();
  const double n = static_cast<double>(x.size());
  const Eigen::ArrayXXd per =
      x.array().max(0.0) - x.array() * targets.array() + (1.0 + (-x.array().abs()).exp()).log();
  Matrix out(1, 1);
  out(0, 0) = per.sum() / n;
  return Var::make(std::move(out), {logits}, [targets, n](Node& self) {
    const auto& X = self.parents[0];
    if (!X->requires_grad) return;
    Matrix p = X->value.unaryExpr([](double v) {
      if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
      const double e = std::exp(v);
      return e / (1.0 + e);
    });
    X->grad_buffer() += (p - targets) * (self.grad(0, 0) / n);
  });
}

Var im2col(const Var& a, int kernel, int stride, int pad, Eigen::Index out_rows) {
  if (kernel < 1 || stride < 1 || pad < 0) throw std::invalid_argument("im2col: bad geometry");
  const auto in_rows = a.rows();
  const auto c = a.cols();
  Matrix out = Matrix::Zero(out_rows, kernel * c);
  for (Eigen::Index i = 0; i < out_rows; ++i) {
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = i * stride - pad + j;
      if (src >= 0 && src < in_rows) out.block(i, j * c, 1, c) = a.value().row(src);
    }
  }
  return Var::make(std::move(out), {a}, [kernel, stride, pad, in_rows, c](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    auto& g = A->grad_buffer();
    for (Eigen::Index i = 0; i < self.grad.rows(); ++i) {
      for (int j = 0; j < kernel; ++j) {
        const Eigen::Index src = i * stride - pad + j;
        if (src >= 0 && src < in_rows) g.row(src) += self.grad.block(i, j * c, 1, c);
      }
    }
  });
}

Var reshape_row_major(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor src = a.value();
  Matrix out = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  const auto in_rows = a.rows();
  const auto in_cols = a.cols();
  return Var::make(std::move(out), {a}, [in_rows, in_cols](Node& self) {
    const auto& A = self.parents[0];
    if (!A->requires_grad) return;
    const RowMajor g = self.grad;
    A->grad_buffer() += Matrix(Eigen::Map<const RowMajor>(g.data(), in_rows, in_cols));
  });
}

Var transpose(const Var& a) {
  return Var::make(a.value().transpose(), {a}, [](Node& self) {
    const auto& A = self.parents[0];
    if (A->requires_grad) A->grad_buffer() += self.grad.transpose();
  });
}

Adam::Adam(std::vector<Var> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  ++t_;
  double clip = 1.0;
  if (options_.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (p.node()->grad.size() != 0) sq += p.node()->grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.max_grad_norm) clip = options_.max_grad_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& node = *params_[i].node();
    if (node.grad.size() == 0) continue;
    const Matrix g = node.grad * clip;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    node.value.array() -= options_.learning_rate * (m_[i].array() / bc1) /
                          ((v_[i].array() / bc2).sqrt() + options_.epsilon);
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ordervqa::nn
