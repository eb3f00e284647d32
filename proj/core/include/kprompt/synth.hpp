// Copyright 2026 The kprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kprompt/corpus.hpp"
#include "kprompt/prompts.hpp"

namespace kprompt {

enum class SynthRule {
  // Next item shares the current item's attribute.
  kSharedAttrNext,
  // Next item shares the group of the current item's attribute, a fact only
  // present two hops away from the item.
  kAttrChain2Hop,
};

std::string to_string(SynthRule rule);
SynthRule synth_rule_from_string(const std::string& s);

struct SynthConfig {
  int n_users = 300;
  int n_items = 200;
  int n_attrs = 20;
  // Attribute groups for kAttrChain2Hop; 0 picks max(2, n_attrs / 10).
  int n_groups = 0;
  int seq_len = 8;
  SynthRule rule = SynthRule::kSharedAttrNext;
  // Probability that a transition ignores the rule and is uniform instead.
  double noise = 0.2;
  std::uint64_t seed = 1;

  int groups() const;
  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthData {
  InteractionLog log;
  KnowledgeGraph kg;
  std::vector<MppTemplate> mpp_templates;
  // Planted structure, for oracles.
  std::map<ItemId, EntityId, IdLess> item_attribute;
  std::map<EntityId, EntityId> attribute_group;
};

// The eleven shipped MPP templates; id 1 is the default evaluation template.
std::vector<MppTemplate> default_mpp_templates();

SynthData generate(const SynthConfig& cfg);

// Standard file names inside a dataset directory.
struct DatasetPaths {
  std::filesystem::path interactions, triples, names, relations,
      item_entities, mpp_templates;

  static DatasetPaths in(const std::filesystem::path& dir);
};

void write_dataset(const std::filesystem::path& dir, const SynthData& data);

}  // namespace kprompt
