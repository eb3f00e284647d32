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

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kprompt/eval.hpp"
#include "kprompt/generate.hpp"
#include "kprompt/model.hpp"
#include "kprompt/synth.hpp"

namespace kprompt {

struct RunConfig {
  std::filesystem::path run_dir = "runs/default";
  // Dataset directory with the standard file names; empty means
  // <run_dir>/data.
  std::filesystem::path data_dir;
  int min_user_count = 5;
  int min_item_count = 5;
  int hops = 1;
  int degree = 4;
  int max_history = 5;
  std::size_t max_input_tokens = 512;
  std::vector<int> train_templates = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int eval_template = 1;
  // Knowledge-tree mask in the encoder; off means full attention.
  bool mask = true;
  bool mask_cross = false;
  bool exclude_seen = false;
  // Model seed, and dataset seed unless synth_seed is set.
  std::uint64_t seed = 42;
  std::optional<std::uint64_t> synth_seed;
  int threads = 1;
  std::vector<int> ks = {5, 10};
  bool verbose = true;
  SynthConfig synth;
  ModelConfig model;
  OptimConfig optim;
  BeamConfig beam;

  std::filesystem::path dataset_dir() const;
  // Throws kConfig naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // Hops, degree, mask, templates and seed: what a metrics report is about.
  nlohmann::json fingerprint() const;
};

using Override = std::pair<std::string, std::string>;

// `--key value` pairs; a flag with no value means "true". Keys may be dotted
// (model.d_model), kebab-case (max-history) or a field name unique to one
// section (epochs).
std::vector<Override> parse_overrides(const std::vector<std::string>& args);
void apply_override(nlohmann::json& config, const Override& o);

// Defaults, then the config file, then overrides, then KPROMPT_SEED.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<Override>& overrides,
                         bool read_env = true);

void run_synth(const RunConfig& cfg);
// Filters and splits the corpus, loads the KG and builds the vocabulary.
void run_ingest(const RunConfig& cfg);
// One JSONL file of compiled samples per split.
void run_compile(const RunConfig& cfg);
std::vector<EpochStat> run_train(const RunConfig& cfg);
MetricsReport run_eval(const RunConfig& cfg, const std::string& split = "test");

struct AblationCell {
  int hops = 0;
  int degree = 0;
  bool mask = true;
  MetricsReport report;
};

// `sweep` is "hops=0..3", "degree=2,4,6" or similar; `mask` is on, off or
// both. Writes <run_dir>/ablation.csv.
std::vector<AblationCell> run_ablate(const RunConfig& cfg,
                                     const std::string& sweep,
                                     const std::string& mask);

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationCell>& cells,
                        const std::vector<int>& ks);

}  // namespace kprompt
