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

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kprompt/error.hpp"
#include "kprompt/pipeline.hpp"

namespace {

using kprompt::RunConfig;

int status_for(kprompt::ErrorCode code) {
  switch (code) {
    case kprompt::ErrorCode::kConfig:
    case kprompt::ErrorCode::kInvalidArgument:
      return 2;
    case kprompt::ErrorCode::kMissingArtifact:
      return 3;
    case kprompt::ErrorCode::kBudgetExceeded:
      return 4;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kprompt: knowledge prompts and tree masks for sequential recommendation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "JSON run config")->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset into data_dir");
  auto* ingest = app.add_subcommand("ingest", "filter, split and build the vocabulary");
  auto* compile = app.add_subcommand("compile", "compile prompts, trees and masks");
  auto* train = app.add_subcommand("train", "train the encoder-decoder");
  auto* eval = app.add_subcommand("eval", "beam-search ranking and HR/NDCG");
  auto* run = app.add_subcommand("run", "ingest, compile, train and eval in sequence");
  auto* ablate = app.add_subcommand("ablate", "sweep hops or degree, optionally mask on/off");

  std::string split = "test";
  eval->add_option("--split", split, "test or valid");
  std::string sweep = "hops=0..3";
  std::string mask_mode = "both";
  ablate->add_option("--sweep", sweep, "hops=a..b or degree=a,b,c");
  ablate->add_option("--mask", mask_mode, "on, off or both");

  for (auto* sub : {synth, ingest, compile, train, eval, run, ablate}) {
    sub->allow_extras();
    sub->add_option("-c,--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->footer("Any config field can be overridden with --key value, e.g. --hops 2 "
                "--model.d_model 32 --epochs 10.");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* active = app.get_subcommands().front();
    const auto overrides = kprompt::parse_overrides(active->remaining());
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    const RunConfig cfg = kprompt::resolve_config(file, overrides);

    if (active == synth) {
      kprompt::run_synth(cfg);
    } else if (active == ingest) {
      kprompt::run_ingest(cfg);
    } else if (active == compile) {
      kprompt::run_compile(cfg);
    } else if (active == train) {
      kprompt::run_train(cfg);
    } else if (active == eval) {
      std::cout << kprompt::run_eval(cfg, split).to_json().dump(2) << '\n';
    } else if (active == run) {
      kprompt::run_ingest(cfg);
      kprompt::run_compile(cfg);
      kprompt::run_train(cfg);
      std::cout << kprompt::run_eval(cfg).to_json().dump(2) << '\n';
    } else if (active == ablate) {
      kprompt::run_ablate(cfg, sweep, mask_mode);
      std::cout << (cfg.run_dir / "ablation.csv").string() << '\n';
    }
  } catch (const kprompt::Error& e) {
    std::cerr << "kprompt: error: " << e.what() << '\n';
    return status_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "kprompt: error: " << e.what() << '\n';
    return 1;
  }
  return EXIT_SUCCESS;
}
