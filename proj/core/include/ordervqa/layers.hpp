// SPDX-License-Identifier: Apache-2.0
//
// Trainable building blocks on top of autograd: dense layers, embeddings and
// the recurrent sentence encoders used by the text branches.

#ifndef ORDERVQA_LAYERS_HPP_
#define ORDERVQA_LAYERS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "ordervqa/autograd.hpp"
#include "ordervqa/random.hpp"

namespace ordervqa::nn {

/// Named view over a model's parameters, in registration order.
class ParameterSet {
 public:
  void add(std::string name, Var param);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<Var> vars() const;
  /// nullptr when absent.
  const Var* find(const std::string& name) const;
  /// Copies values from `other` by name; throws on missing names or shape
  /// mismatch.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

/// Xavier/Glorot uniform init.
Matrix xavier(Rng& rng, Eigen::Index rows, Eigen::Index cols);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Linear() = default;
  Linear(Rng& rng, Eigen::Index in, Eigen::Index out);
  /// Zero weights and bias.
  static Linear zeros(Eigen::Index in, Eigen::Index out);

  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  void register_in(ParameterSet& set, const std::string& prefix) const;
};

struct Embedding {
  Var table;  // vocab x dim

  Embedding() = default;
  Embedding(Rng& rng, Eigen::Index vocab, Eigen::Index dim, double init_scale = 0.1);

  Var operator()(std::span<const int> ids) const { return gather_rows(table, ids); }
  void register_in(ParameterSet& set, const std::string& prefix) const;
};

/// One direction of a gated recurrent unit (reset/update/candidate gates).
struct GruDirection {
  Var w;   // in x 3H
  Var u;   // H x 3H
  Var bw;  // 1 x 3H
  Var bu;  // 1 x 3H
  Eigen::Index hidden = 0;

  GruDirection() = default;
  GruDirection(Rng& rng, Eigen::Index in, Eigen::Index hidden);
  /// Hidden states for each row of `x` (L x in), visited in order or reversed;
  /// row t of the result is the state after reading row t.
  Var run(const Var& x, bool reverse) const;
  void register_in(ParameterSet& set, const std::string& prefix) const;
};

/// Bidirectional GRU: per-token states are [forward ; backward] (L x 2H).
struct BiGru {
  GruDirection fwd;
  GruDirection bwd;

  BiGru() = default;
  BiGru(Rng& rng, Eigen::Index in, Eigen::Index hidden);
  Var states(const Var& x) const;
  /// Mean of states() over tokens (1 x 2H).
  Var mean_state(const Var& x) const { return mean_rows(states(x)); }
  Eigen::Index output_dim() const { return 2 * fwd.hidden; }
  void register_in(ParameterSet& set, const std::string& prefix) const;
};

/// Unidirectional LSTM returning the final hidden state.
struct Lstm {
  Var w;  // in x 4H, gate order i, f, g, o
  Var u;  // H x 4H
  Var b;  // 1 x 4H
  Eigen::Index hidden = 0;

  Lstm() = default;
  Lstm(Rng& rng, Eigen::Index in, Eigen::Index hidden);
  /// Final hidden state (1 x H); zeros for an empty sequence.
  Var last_state(const Var& x) const;
  void register_in(ParameterSet& set, const std::string& prefix) const;
};

}  // namespace ordervqa::nn

#endif  // ORDERVQA_LAYERS_HPP_
