// SPDX-License-Identifier: Apache-2.0

#ifndef ORDERVQA_RANDOM_HPP_
#define ORDERVQA_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace ordervqa {

using Rng = std::mt19937_64;

/// Stable sub-seed for `key` under `master`; identical across runs and
/// platforms (FNV-1a over the key, mixed with splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);

/// Uniform integer in [lo, hi].
int uniform_int(Rng& rng, int lo, int hi);

/// Uniform real in [lo, hi).
double uniform_real(Rng& rng, double lo, double hi);

double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);

}  // namespace ordervqa

#endif  // ORDERVQA_RANDOM_HPP_
