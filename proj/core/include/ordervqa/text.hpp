// SPDX-License-Identifier: Apache-2.0

#ifndef ORDERVQA_TEXT_HPP_
#define ORDERVQA_TEXT_HPP_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ordervqa/autograd.hpp"

namespace ordervqa {

/// Lowercased alphanumeric runs of `text`.
std::vector<std::string> tokenize(std::string_view text);

/// Token -> row index. Row 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// Sorted token list (without the unknown entry).
  explicit Vocabulary(std::vector<std::string> tokens);
  static Vocabulary build(std::span<const std::string> captions);

  int index(std::string_view token) const;
  /// Token ids of `text`, truncated to `max_tokens` when positive. An empty
  /// caption encodes as a single unknown token.
  std::vector<int> encode(std::string_view text, int max_tokens = 0) const;
  std::size_t size() const { return tokens_.size() + 1; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
};

/// Overwrites rows of `table` (vocab x dim) with vectors from a text file
/// of "token v1 v2 ..." lines (GloVe layout). Returns the number of rows
/// replaced; lines with a different dimension are rejected.
std::size_t load_word_embeddings(const std::filesystem::path& path,
                                 const Vocabulary& vocab, nn::Matrix& table);

}  // namespace ordervqa

#endif  // ORDERVQA_TEXT_HPP_
