// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ordervqa::nn {

void ParameterSet::add(std::string name, Var param) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter " + name);
  items_.emplace_back(std::move(name), std::move(param));
}

std::vector<Var> ParameterSet::vars() const {
  std::vector<Var> out;
  out.reserve(items_.size());
  for (const auto& [name, v] : items_) out.push_back(v);
  return out;
}

const Var* ParameterSet::find(const std::string& name) const {
  for (const auto& [n, v] : items_) {
    if (n == name) return &v;
  }
  return nullptr;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& [name, v] : items_) {
    const Var* src = other.find(name);
    if (src == nullptr) throw std::invalid_argument("missing parameter " + name);
    if (src->rows() != v.rows() || src->cols() != v.cols()) {
      throw std::invalid_argument("shape mismatch for parameter " + name);
    }
    v.mutable_value() = src->value();
  }
}

Matrix xavier(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform_real(rng, -a, a);
  }
  return m;
}

Linear::Linear(Rng& rng, Eigen::Index in, Eigen::Index out)
    : weight(parameter(xavier(rng, in, out))), bias(parameter(Matrix::Zero(1, out))) {}

Linear Linear::zeros(Eigen::Index in, Eigen::Index out) {
  Linear l;
  l.weight = parameter(Matrix::Zero(in, out));
  l.bias = parameter(Matrix::Zero(1, out));
  return l;
}

void Linear::register_in(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

Embedding::Embedding(Rng& rng, Eigen::Index vocab, Eigen::Index dim, double init_scale) {
  Matrix m(vocab, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index i = 0; i < vocab; ++i) m(i, j) = normal(rng, 0.0, init_scale);
  }
  table = parameter(std::move(m));
}

void Embedding::register_in(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".table", table);
}

GruDirection::GruDirection(Rng& rng, Eigen::Index in, Eigen::Index hidden_size)
    : w(parameter(xavier(rng, in, 3 * hidden_size))),
      u(parameter(xavier(rng, hidden_size, 3 * hidden_size))),
      bw(parameter(Matrix::Zero(1, 3 * hidden_size))),
      bu(parameter(Matrix::Zero(1, 3 * hidden_size))),
      hidden(hidden_size) {}

Var GruDirection::run(const Var& x, bool reverse) const {
  const auto len = x.rows();
  const auto H = hidden;
  const Var xw = add_row(matmul(x, w), bw);
  Var h = constant(Matrix::Zero(1, H));
  std::vector<Var> states(static_cast<std::size_t>(len));
  for (Eigen::Index step = 0; step < len; ++step) {
    const Eigen::Index t = reverse ? len - 1 - step : step;
    const Var xt = slice_rows(xw, t, 1);
    const Var hu = add_row(matmul(h, u), bu);
    const Var r = sigmoid(add(slice_cols(xt, 0, H), slice_cols(hu, 0, H)));
    const Var z = sigmoid(add(slice_cols(xt, H, H), slice_cols(hu, H, H)));
    const Var n = tanh(add(slice_cols(xt, 2 * H, H), mul(r, slice_cols(hu, 2 * H, H))));
    h = add(mul(one_minus(z), n), mul(z, h));
    states[static_cast<std::size_t>(t)] = h;
  }
  return concat_rows(states);
}

void GruDirection::register_in(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".w", w);
  set.add(prefix + ".u", u);
  set.add(prefix + ".bw", bw);
  set.add(prefix + ".bu", bu);
}

BiGru::BiGru(Rng& rng, Eigen::Index in, Eigen::Index hidden)
    : fwd(rng, in, hidden), bwd(rng, in, hidden) {}

Var BiGru::states(const Var& x) const {
  if (x.rows() == 0) throw std::invalid_argument("BiGru: empty sequence");
  const Var parts[] = {fwd.run(x, false), bwd.run(x, true)};
  return concat_cols(parts);
}

void BiGru::register_in(ParameterSet& set, const std::string& prefix) const {
  fwd.register_in(set, prefix + ".fwd");
  bwd.register_in(set, prefix + ".bwd");
}

Lstm::Lstm(Rng& rng, Eigen::Index in, Eigen::Index hidden_size)
    : w(parameter(xavier(rng, in, 4 * hidden_size))),
      u(parameter(xavier(rng, hidden_size, 4 * hidden_size))),
      b(parameter(Matrix::Zero(1, 4 * hidden_size))),
      hidden(hidden_size) {
  // Forget gate starts open.
  b.mutable_value().middleCols(hidden_size, hidden_size).setOnes();
}

Var Lstm::last_state(const Var& x) const {
  const auto H = hidden;
  Var h = constant(Matrix::Zero(1, H));
  if (x.rows() == 0) return h;
  Var c = constant(Matrix::Zero(1, H));
  const Var xw = add_row(matmul(x, w), b);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const Var g = add(slice_rows(xw, t, 1), matmul(h, u));
    const Var i = sigmoid(slice_cols(g, 0, H));
    const Var f = sigmoid(slice_cols(g, H, H));
    const Var cand = tanh(slice_cols(g, 2 * H, H));
    const Var o = sigmoid(slice_cols(g, 3 * H, H));
    c = add(mul(f, c), mul(i, cand));
    h = mul(o, tanh(c));
  }
  return h;
}

void Lstm::register_in(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".w", w);
  set.add(prefix + ".u", u);
  set.add(prefix + ".b", b);
}

}  // namespace ordervqa::nn
