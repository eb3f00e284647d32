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

#include "kprompt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "kprompt/error.hpp"
#include "tsv.hpp"

namespace kprompt {

using json = nlohmann::json;

HitNdcg ndcg_hr(std::optional<int> rank, int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (!rank) return {};
  if (*rank <= 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "rank must be >= 1, got " + std::to_string(*rank));
  }
  if (*rank > k) return {};
  return {1.0, 1.0 / std::log2(static_cast<double>(*rank) + 1.0)};
}

json MetricsReport::to_json() const {
  json metrics = json::object();
  for (const auto& [k, v] : hr) metrics["HR@" + std::to_string(k)] = v;
  for (const auto& [k, v] : ndcg) metrics["NDCG@" + std::to_string(k)] = v;
  return {{"metrics", metrics}, {"users", users}, {"config", fingerprint}};
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  for (const auto& [key, v] : j.at("metrics").items()) {
    const auto at = key.find('@');
    const int k = std::stoi(key.substr(at + 1));
    if (key.starts_with("HR@")) {
      r.hr[k] = v.get<double>();
    } else if (key.starts_with("NDCG@")) {
      r.ndcg[k] = v.get<double>();
    }
  }
  r.users = j.at("users").get<std::size_t>();
  r.fingerprint = j.value("config", json::object());
  return r;
}

std::optional<int> UserResult::rank() const {
  for (std::size_t i = 0; i < topk.size(); ++i) {
    if (topk[i].item == target) return static_cast<int>(i + 1);
  }
  return std::nullopt;
}

MetricsReport aggregate(std::span<const UserResult> results,
                        std::span<const int> ks, json fingerprint) {
  MetricsReport r;
  r.users = results.size();
  r.fingerprint = std::move(fingerprint);
  for (int k : ks) {
    double hr = 0, ndcg = 0;
    for (const auto& u : results) {
      auto m = ndcg_hr(u.rank(), k);
      hr += m.hr;
      ndcg += m.ndcg;
    }
    const double n = results.empty() ? 1.0 : static_cast<double>(results.size());
    r.hr[k] = hr / n;
    r.ndcg[k] = ndcg / n;
  }
  return r;
}

std::vector<UserResult> rank_users(const ModelState<float>& state,
                                   std::span<const CompiledSample> samples,
                                   const ItemCatalog& catalog,
                                   const BeamConfig& cfg, bool masked,
                                   int threads) {
  cfg.validate();
  std::vector<UserResult> out(samples.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < samples.size(); i += stride) {
      const auto& s = samples[i];
      out[i].user = s.user;
      out[i].target = s.target;
      out[i].topk = beam_search(state, make_sequence(s, masked), catalog, cfg,
                                s.history);
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
  }
  return out;
}

MetricsReport evaluate_split(const ModelState<float>& state,
                             std::span<const CompiledSample> samples,
                             const ItemCatalog& catalog, const BeamConfig& cfg,
                             std::span<const int> ks, bool masked,
                             json fingerprint, int threads,
                             std::vector<UserResult>* results) {
  if (samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "evaluation split is empty");
  }
  for (int k : ks) {
    if (k > cfg.k) {
      throw Error(ErrorCode::kConfig, "metric cutoff " + std::to_string(k) +
                                          " exceeds beam.k " + std::to_string(cfg.k));
    }
  }
  for (const auto& s : samples) {
    if (s.mask.size() != s.tokens.size()) {
      throw Error(ErrorCode::kMissingArtifact,
                  "compiled sample for user '" + s.user + "' has no usable mask");
    }
  }
  auto ranked = rank_users(state, samples, catalog, cfg, masked, threads);
  auto report = aggregate(ranked, ks, std::move(fingerprint));
  if (results) *results = std::move(ranked);
  return report;
}

void write_topk(const std::filesystem::path& path,
                std::span<const UserResult> results) {
  auto out = detail::open_output(path);
  for (const auto& r : results) {
    json topk = json::array();
    for (const auto& e : r.topk) topk.push_back({e.item, e.score});
    out << json{{"user", r.user}, {"target", r.target}, {"topk", topk}}.dump() << '\n';
  }
}

std::vector<UserResult> read_topk(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<UserResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      UserResult r;
      r.user = j.at("user").get<std::string>();
      r.target = j.at("target").get<std::string>();
      for (const auto& e : j.at("topk")) {
        r.topk.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report) {
  auto out = detail::open_output(path);
  out << report.to_json().dump(2) << '\n';
}

MetricsReport read_metrics(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingArtifact,
                "missing " + path.string() + " (run `kprompt eval` first)");
  }
  auto in = detail::open_input(path);
  return MetricsReport::from_json(json::parse(in));
}

}  // namespace kprompt
