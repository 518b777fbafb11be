// SPDX-License-Identifier: Apache-2.0

#include "ordervqa/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "ordervqa/types.hpp"

namespace ordervqa {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i) + 1).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> captions) {
  std::set<std::string> seen;
  for (const auto& c : captions) {
    for (auto& t : tokenize(c)) seen.insert(std::move(t));
  }
  return Vocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text, int max_tokens) const {
  std::vector<int> ids;
  for (const auto& t : tokenize(text)) {
    if (max_tokens > 0 && static_cast<int>(ids.size()) >= max_tokens) break;
    ids.push_back(index(t));
  }
  if (ids.empty()) ids.push_back(0);
  return ids;
}

std::size_t load_word_embeddings(const std::filesystem::path& path,
                                 const Vocabulary& vocab, nn::Matrix& table) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path.string());
  std::string line;
  std::size_t replaced = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    const int row = vocab.index(token);
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (static_cast<Eigen::Index>(values.size()) != table.cols()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(table.cols()) + " values");
    }
    if (row == 0) continue;
    for (std::size_t j = 0; j < values.size(); ++j) {
      table(row, static_cast<Eigen::Index>(j)) = values[j];
    }
    ++replaced;
  }
  return replaced;
}

}  // namespace ordervqa
