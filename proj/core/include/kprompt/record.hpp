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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kprompt/corpus.hpp"
#include "kprompt/ktree.hpp"
#include "kprompt/maskgen.hpp"

namespace kprompt {

struct NodeRecord {
  int id = 0;
  NodeKind kind = NodeKind::kRoot;
  std::optional<int> parent;
  std::vector<Span> spans;
};

// One compiled (user, split point) sample; the contract between the data
// pipeline and the model.
struct CompiledSample {
  std::string split;
  UserId user;
  std::vector<ItemId> history;
  ItemId target;
  TokenId target_token = 0;
  int template_id = 0;
  std::vector<TokenId> tokens;
  std::size_t mask_position = 0;
  std::vector<NodeRecord> nodes;
  MaskMatrix mask;

  // Tree with parent links and spans only, enough to rebuild the mask.
  KnowledgeTree skeleton() const;
};

std::vector<NodeRecord> node_records(const KnowledgeTree& tree);

nlohmann::json to_json(const CompiledSample& s);
CompiledSample sample_from_json(const nlohmann::json& j);

void write_samples(const std::filesystem::path& path,
                   const std::vector<CompiledSample>& samples);
std::vector<CompiledSample> read_samples(const std::filesystem::path& path);

}  // namespace kprompt
