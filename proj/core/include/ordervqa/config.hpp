// SPDX-License-Identifier: Apache-2.0
//
// One JSON run configuration with a section per module:
//
//   {"seed": 7, "world": {...}, "questions": {...}, "pairwise": {...},
//    "composition": {...}, "grounding": {...}}
//
// Every section and field is optional; omitted fields keep their defaults.
// Unknown sections or fields are rejected so typos do not pass silently.
// A section without its own "seed" inherits the top-level one.

#ifndef ORDERVQA_CONFIG_HPP_
#define ORDERVQA_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ordervqa/composition.hpp"
#include "ordervqa/grounding.hpp"
#include "ordervqa/pairwise.hpp"
#include "ordervqa/question_gen.hpp"
#include "ordervqa/synthetic.hpp"

namespace ordervqa {

struct RunConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  QuestionGenOptions questions;
  PairwiseConfig pairwise;
  CompositionConfig composition;
  GroundingConfig grounding;
};

std::string_view to_string(ItemKind kind);
ItemKind parse_item_kind(std::string_view name);

nlohmann::json to_json(const WorldConfig& c);
nlohmann::json to_json(const QuestionGenOptions& c);
nlohmann::json to_json(const PairwiseConfig& c);
nlohmann::json to_json(const CompositionConfig& c);
nlohmann::json to_json(const GroundingConfig& c);
nlohmann::json to_json(const RunConfig& c);

// Each reader starts from `base` and overrides the fields present in `j`.
WorldConfig world_config_from_json(const nlohmann::json& j, WorldConfig base = {});
QuestionGenOptions question_options_from_json(const nlohmann::json& j,
                                              QuestionGenOptions base = {});
PairwiseConfig pairwise_config_from_json(const nlohmann::json& j, PairwiseConfig base = {});
CompositionConfig composition_config_from_json(const nlohmann::json& j,
                                               CompositionConfig base = {});
GroundingConfig grounding_config_from_json(const nlohmann::json& j, GroundingConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig parse_run_config(std::string_view text);
RunConfig read_run_config(const std::filesystem::path& path);

}  // namespace ordervqa

#endif  // ORDERVQA_CONFIG_HPP_
