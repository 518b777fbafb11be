// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "ordervqa/io.hpp"
#include "ordervqa/types.hpp"

namespace ordervqa {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'O', 'V', 'Q', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

void Checkpoint::store(const nn::ParameterSet& params) {
  tensors.clear();
  for (const auto& [name, var] : params.items()) tensors.emplace_back(name, var.value());
}

void Checkpoint::load_into(const nn::ParameterSet& params) const {
  for (const auto& [name, var] : params.items()) {
    const nn::Matrix* found = nullptr;
    for (const auto& [n, m] : tensors) {
      if (n == name) found = &m;
    }
    if (found == nullptr) {
      throw ValidationError("checkpoint is missing tensor '" + name + "'");
    }
    if (found->rows() != var.rows() || found->cols() != var.cols()) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " +
                            std::to_string(found->rows()) + "x" +
                            std::to_string(found->cols()) + ", model expects " +
                            std::to_string(var.rows()) + "x" + std::to_string(var.cols()));
    }
    auto target = var;
    target.mutable_value() = *found;
  }
}

std::string format_checkpoint(const Checkpoint& ckpt) {
  json table = json::array();
  for (const auto& [name, m] : ckpt.tensors) {
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  const json header = {{"model", ckpt.model},     {"config", ckpt.config},
                       {"log", ckpt.log},         {"vocabulary", ckpt.vocabulary},
                       {"tensors", std::move(table)}};
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& [name, m] : ckpt.tensors) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      }
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("checkpoint: bad magic (expected OVQC) at byte 0", 0);
  }
  if (get_u32(bytes, 4) != kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(get_u32(bytes, 4)), 4);
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() - 12 < header_len) {
    throw ParseError("checkpoint: truncated header", bytes.size());
  }
  json header;
  try {
    header = json::parse(bytes.substr(12, header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what(),
                     12 + (e.byte > 0 ? e.byte - 1 : 0));
  }
  Checkpoint ckpt;
  try {
    ckpt.model = header.at("model").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.log = header.at("log");
    ckpt.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    std::size_t at = 12 + header_len;
    for (const auto& entry : header.at("tensors")) {
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const std::size_t need = static_cast<std::size_t>(rows * cols) * 4;
      if (rows < 0 || cols < 0 || bytes.size() - at < need) {
        throw ParseError("checkpoint: truncated tensor data at byte " + std::to_string(at), at);
      }
      nn::Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          m(r, c) = std::bit_cast<float>(get_u32(bytes, at));
          at += 4;
        }
      }
      ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(m));
    }
    if (at != bytes.size()) {
      throw ParseError("checkpoint: trailing bytes at byte " + std::to_string(at), at);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad header field: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, format_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

}  // namespace ordervqa
