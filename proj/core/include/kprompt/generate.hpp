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
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kprompt/corpus.hpp"
#include "kprompt/model.hpp"
#include "kprompt/prompts.hpp"
#include "kprompt/record.hpp"

namespace kprompt {

struct BeamConfig {
  int beam_width = 20;
  int k = 10;
  // Item token plus end of sequence.
  int max_target_len = 2;
  // Drop history items from the candidate set.
  bool exclude_seen = false;

  void validate() const;
  nlohmann::json to_json() const;
  static BeamConfig from_json(const nlohmann::json& j);
};

// Candidate items with their atomic tokens, in ascending ItemId order.
struct ItemCatalog {
  std::vector<ItemId> items;
  std::vector<TokenId> tokens;

  static ItemCatalog from_vocabulary(const Vocabulary& vocab,
                                     std::span<const ItemId> items);
  std::size_t size() const { return items.size(); }
};

struct Ranked {
  ItemId item;
  double score = 0;

  bool operator==(const Ranked&) const = default;
};

// Encoder/decoder view of a compiled sample. The returned Sequence points at
// sample.mask when `masked`, so the sample must outlive it.
Sequence make_sequence(const CompiledSample& sample, bool masked);

// Constrained beam search: step one may only emit catalog item tokens, later
// steps only end of sequence. Log-probabilities are renormalised over the
// allowed tokens, so the forced end step adds exactly zero. Equal scores are
// ordered by catalog position.
std::vector<Ranked> beam_search(const ModelState<float>& state,
                                const Sequence& seq,
                                const ItemCatalog& catalog,
                                const BeamConfig& cfg,
                                std::span<const ItemId> seen = {});

}  // namespace kprompt
