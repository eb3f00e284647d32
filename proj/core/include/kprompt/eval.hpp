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
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "kprompt/generate.hpp"

namespace kprompt {

struct HitNdcg {
  double hr = 0;
  double ndcg = 0;
};

// Single-target HR@k and NDCG@k for a 1-based rank, or nullopt when the
// target is not in the list.
HitNdcg ndcg_hr(std::optional<int> rank, int k);

struct MetricsReport {
  std::map<int, double> hr;
  std::map<int, double> ndcg;
  std::size_t users = 0;
  nlohmann::json fingerprint = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

struct UserResult {
  UserId user;
  ItemId target;
  std::vector<Ranked> topk;

  std::optional<int> rank() const;
};

// Equal-weight mean over users.
MetricsReport aggregate(std::span<const UserResult> results,
                        std::span<const int> ks,
                        nlohmann::json fingerprint = nlohmann::json::object());

// Beam search for every sample; results come back in input order whatever
// the thread count.
std::vector<UserResult> rank_users(const ModelState<float>& state,
                                   std::span<const CompiledSample> samples,
                                   const ItemCatalog& catalog,
                                   const BeamConfig& cfg, bool masked,
                                   int threads = 1);

MetricsReport evaluate_split(const ModelState<float>& state,
                             std::span<const CompiledSample> samples,
                             const ItemCatalog& catalog, const BeamConfig& cfg,
                             std::span<const int> ks, bool masked = true,
                             nlohmann::json fingerprint = nlohmann::json::object(),
                             int threads = 1,
                             std::vector<UserResult>* results = nullptr);

void write_topk(const std::filesystem::path& path,
                std::span<const UserResult> results);
std::vector<UserResult> read_topk(const std::filesystem::path& path);

void write_metrics(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics(const std::filesystem::path& path);

}  // namespace kprompt
