// SPDX-License-Identifier: Apache-2.0
//
// Single-file model container shared by every learned model:
//
//   "OVQC" | u32 version | u32 header length | header JSON | tensor data
//
// The header records the model kind, a config echo, the training log, an
// optional vocabulary and the tensor table (name, rows, cols). Tensor data
// follows in table order as row-major float32 little-endian.

#ifndef ORDERVQA_CHECKPOINT_HPP_
#define ORDERVQA_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordervqa/layers.hpp"

namespace ordervqa {

struct Checkpoint {
  std::string model;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json log = nlohmann::json::array();
  std::vector<std::string> vocabulary;
  std::vector<std::pair<std::string, nn::Matrix>> tensors;

  void store(const nn::ParameterSet& params);
  /// Copies stored tensors into `params` by name; throws on missing names or
  /// shape mismatches.
  void load_into(const nn::ParameterSet& params) const;
};

std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ordervqa

#endif  // ORDERVQA_CHECKPOINT_HPP_
