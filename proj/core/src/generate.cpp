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

#include "kprompt/generate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "kprompt/error.hpp"

namespace kprompt {

using json = nlohmann::json;

void BeamConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::kConfig, "beam.k must be >= 1");
  if (beam_width < k) {
    throw Error(ErrorCode::kConfig,
                "beam.beam_width (" + std::to_string(beam_width) +
                    ") must be >= beam.k (" + std::to_string(k) + ")");
  }
  if (max_target_len < 2) {
    throw Error(ErrorCode::kConfig, "beam.max_target_len must be >= 2");
  }
}

json BeamConfig::to_json() const {
  return {{"beam_width", beam_width},
          {"k", k},
          {"max_target_len", max_target_len},
          {"exclude_seen", exclude_seen}};
}

BeamConfig BeamConfig::from_json(const json& j) {
  BeamConfig c;
  c.beam_width = j.value("beam_width", c.beam_width);
  c.k = j.value("k", c.k);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  c.exclude_seen = j.value("exclude_seen", c.exclude_seen);
  return c;
}

ItemCatalog ItemCatalog::from_vocabulary(const Vocabulary& vocab,
                                         std::span<const ItemId> items) {
  std::vector<ItemId> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(), IdLess{});
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  ItemCatalog c;
  for (const auto& item : sorted) {
    auto id = vocab.find(item_token(item));
    if (!id) {
      throw Error(ErrorCode::kInvalidArgument,
                  "item '" + item + "' has no token in the vocabulary");
    }
    c.items.push_back(item);
    c.tokens.push_back(*id);
  }
  return c;
}

Sequence make_sequence(const CompiledSample& sample, bool masked) {
  Sequence s;
  s.encoder = sample.tokens;
  s.mask = masked ? &sample.mask : nullptr;
  s.mask_position = sample.mask_position;
  s.decoder_input = {special::kBosId, sample.target_token};
  s.target = {sample.target_token, special::kEosId};
  return s;
}

std::vector<Ranked> beam_search(const ModelState<float>& state,
                                const Sequence& seq,
                                const ItemCatalog& catalog,
                                const BeamConfig& cfg,
                                std::span<const ItemId> seen) {
  cfg.validate();
  std::vector<std::size_t> allowed;
  {
    std::set<std::string_view> excluded;
    if (cfg.exclude_seen) excluded.insert(seen.begin(), seen.end());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (!excluded.contains(catalog.items[i])) allowed.push_back(i);
    }
  }
  if (allowed.empty()) return {};

  const Encoded<float> enc = encode(state, seq);
  const TokenId bos = special::kBosId;
  const auto logits = next_token_logits(state, enc, std::span(&bos, 1));

  // Step one: log-softmax restricted to the allowed item tokens.
  double mx = -std::numeric_limits<double>::infinity();
  for (auto i : allowed) mx = std::max(mx, static_cast<double>(logits(catalog.tokens[i])));
  double sum = 0;
  for (auto i : allowed) sum += std::exp(static_cast<double>(logits(catalog.tokens[i])) - mx);
  const double lse = mx + std::log(sum);

  struct Beam {
    std::size_t index;
    double score;
  };
  std::vector<Beam> beams;
  beams.reserve(allowed.size());
  for (auto i : allowed) {
    beams.push_back({i, static_cast<double>(logits(catalog.tokens[i])) - lse});
  }
  auto better = [](const Beam& a, const Beam& b) {
    return a.score != b.score ? a.score > b.score : a.index < b.index;
  };
  const auto width = std::min(beams.size(), static_cast<std::size_t>(cfg.beam_width));
  std::partial_sort(beams.begin(), beams.begin() + static_cast<std::ptrdiff_t>(width),
                    beams.end(), better);
  beams.resize(width);

  // Remaining steps admit only end of sequence; renormalised over a single
  // token its log-probability is zero, so every beam finishes unchanged.

  std::vector<Ranked> out;
  const auto k = std::min(beams.size(), static_cast<std::size_t>(cfg.k));
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({catalog.items[beams[i].index], beams[i].score});
  }
  return out;
}

}  // namespace kprompt
