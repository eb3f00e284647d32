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

#include "kprompt/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include "kprompt/error.hpp"
#include "kprompt/ktree.hpp"
#include "kprompt/maskgen.hpp"
#include "kprompt/record.hpp"
#include "tsv.hpp"

namespace kprompt {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json section_without_seed(json j) {
  j.erase("seed");
  return j;
}

void check_keys(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object()) {
    throw Error(ErrorCode::kConfig, "config." + prefix + " must be an object");
  }
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorCode::kConfig, "unknown config key '" + prefix +
                                          (prefix.empty() ? "" : ".") + key + "'");
    }
    if (known[key].is_object() && !known[key].empty()) {
      check_keys(value, known[key], prefix.empty() ? key : prefix + "." + key);
    }
  }
}

void merge(json& base, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

}  // namespace

fs::path RunConfig::dataset_dir() const {
  return data_dir.empty() ? run_dir / "data" : data_dir;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (run_dir.empty()) fail("run_dir must not be empty");
  if (hops < 0 || hops > kMaxHops) {
    fail("hops must be in [0, " + std::to_string(kMaxHops) + "], got " + std::to_string(hops));
  }
  if (degree < 1) fail("degree must be >= 1, got " + std::to_string(degree));
  if (max_history < 1) fail("max_history must be >= 1");
  if (max_input_tokens < 3) fail("max_input_tokens must be >= 3");
  if (min_user_count < 0 || min_item_count < 0) fail("min counts must be >= 0");
  if (train_templates.empty()) fail("train_templates must not be empty");
  if (threads < 1) fail("threads must be >= 1");
  if (ks.empty()) fail("ks must not be empty");
  for (int k : ks) {
    if (k < 1) fail("ks entries must be >= 1");
    if (k > beam.k) {
      fail("ks entry " + std::to_string(k) + " exceeds beam.k " + std::to_string(beam.k));
    }
  }
  synth.validate();
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = static_cast<int>(special::kCount);
  m.validate();
  optim.validate();
  beam.validate();
  if (beam.max_target_len != model.max_target_len) {
    fail("beam.max_target_len must equal model.max_target_len");
  }
}

json RunConfig::to_json() const {
  json j = {{"run_dir", run_dir.string()},
            {"data_dir", data_dir.string()},
            {"min_user_count", min_user_count},
            {"min_item_count", min_item_count},
            {"hops", hops},
            {"degree", degree},
            {"max_history", max_history},
            {"max_input_tokens", max_input_tokens},
            {"train_templates", train_templates},
            {"eval_template", eval_template},
            {"mask", mask},
            {"mask_cross", mask_cross},
            {"exclude_seen", exclude_seen},
            {"seed", seed},
            {"synth_seed", synth_seed ? json(*synth_seed) : json(nullptr)},
            {"threads", threads},
            {"ks", ks},
            {"verbose", verbose},
            {"synth", section_without_seed(synth.to_json())},
            {"optim", optim.to_json()},
            {"beam", section_without_seed(beam.to_json())}};
  json m = section_without_seed(model.to_json());
  m.erase("vocab_size");
  m.erase("mask_cross");
  j["model"] = m;
  j["beam"].erase("exclude_seen");
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, RunConfig{}.to_json(), "");
  RunConfig c;
  try {
    c.run_dir = j.value("run_dir", c.run_dir.string());
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.min_user_count = j.value("min_user_count", c.min_user_count);
    c.min_item_count = j.value("min_item_count", c.min_item_count);
    c.hops = j.value("hops", c.hops);
    c.degree = j.value("degree", c.degree);
    c.max_history = j.value("max_history", c.max_history);
    c.max_input_tokens = j.value("max_input_tokens", c.max_input_tokens);
    c.train_templates = j.value("train_templates", c.train_templates);
    c.eval_template = j.value("eval_template", c.eval_template);
    c.mask = j.value("mask", c.mask);
    c.mask_cross = j.value("mask_cross", c.mask_cross);
    c.exclude_seen = j.value("exclude_seen", c.exclude_seen);
    c.seed = j.value("seed", c.seed);
    if (j.contains("synth_seed") && !j["synth_seed"].is_null()) {
      c.synth_seed = j["synth_seed"].get<std::uint64_t>();
    }
    c.threads = j.value("threads", c.threads);
    c.ks = j.value("ks", c.ks);
    c.verbose = j.value("verbose", c.verbose);
    if (j.contains("synth")) c.synth = SynthConfig::from_json(j["synth"]);
    if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
    if (j.contains("optim")) c.optim = OptimConfig::from_json(j["optim"]);
    if (j.contains("beam")) c.beam = BeamConfig::from_json(j["beam"]);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid config value: ") + e.what());
  }
  c.model.seed = c.seed;
  c.model.mask_cross = c.mask_cross;
  c.model.vocab_size = 0;
  c.synth.seed = c.synth_seed.value_or(c.seed);
  c.beam.exclude_seen = c.exclude_seen;
  return c;
}

json RunConfig::fingerprint() const {
  return {{"hops", hops},
          {"degree", degree},
          {"mask", mask},
          {"mask_cross", mask_cross},
          {"exclude_seen", exclude_seen},
          {"eval_template", eval_template},
          {"seed", seed}};
}

std::vector<Override> parse_overrides(const std::vector<std::string>& args) {
  std::vector<Override> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (!a.starts_with("--") || a.size() == 2) {
      throw Error(ErrorCode::kConfig, "expected --key, got '" + a + "'");
    }
    std::string key = a.substr(2);
    std::string value = "true";
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else if (i + 1 < args.size() && !args[i + 1].starts_with("--")) {
      value = args[++i];
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_override(json& config, const Override& o) {
  std::string key = o.first;
  std::replace(key.begin(), key.end(), '-', '_');
  json value;
  if (o.second == "on") {
    value = true;
  } else if (o.second == "off") {
    value = false;
  } else {
    value = json::parse(o.second, nullptr, false);
    if (value.is_discarded()) value = o.second;
  }

  const json known = RunConfig{}.to_json();
  std::vector<std::string> path;
  if (key.find('.') != std::string::npos) {
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) path.push_back(part);
  } else if (known.contains(key)) {
    path = {key};
  } else {
    for (const auto& [section, body] : known.items()) {
      if (body.is_object() && body.contains(key)) {
        if (!path.empty()) {
          throw Error(ErrorCode::kConfig, "ambiguous config key '--" + o.first +
                                              "'; use " + path[0] + "." + key +
                                              " or " + section + "." + key);
        }
        path = {section, key};
      }
    }
  }
  if (path.empty()) {
    throw Error(ErrorCode::kConfig, "unknown config key '--" + o.first + "'");
  }
  const json* k = &known;
  json* target = &config;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!k->is_object() || !k->contains(path[i])) {
      throw Error(ErrorCode::kConfig, "unknown config key '--" + o.first + "'");
    }
    k = &(*k)[path[i]];
    if (i + 1 < path.size()) {
      if (!target->contains(path[i])) (*target)[path[i]] = json::object();
      target = &(*target)[path[i]];
    }
  }
  if (k->is_string() && !value.is_string()) value = o.second;
  (*target)[path.back()] = value;
}

RunConfig resolve_config(const std::optional<fs::path>& file,
                         const std::vector<Override>& overrides, bool read_env) {
  json j = RunConfig{}.to_json();
  if (file) {
    auto in = detail::open_input(*file);
    json given = json::parse(in, nullptr, false);
    if (given.is_discarded()) {
      throw Error(ErrorCode::kConfig, "config file " + file->string() + " is not valid JSON");
    }
    check_keys(given, j, "");
    merge(j, given);
  }
  for (const auto& o : overrides) apply_override(j, o);
  if (read_env) {
    if (const char* env = std::getenv("KPROMPT_SEED")) {
      try {
        j["seed"] = std::stoull(env);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfig,
                    "KPROMPT_SEED must be a non-negative integer, got '" + std::string(env) + "'");
      }
    }
  }
  RunConfig c = RunConfig::from_json(j);
  c.validate();
  return c;
}

namespace {

void log(const RunConfig& cfg, const std::string& msg) {
  if (cfg.verbose) std::cerr << "[kprompt] " << msg << '\n';
}

void save_config(const RunConfig& cfg) {
  auto out = detail::open_output(cfg.run_dir / "config.json");
  out << cfg.to_json().dump(2) << '\n';
}

void require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p)) {
    throw Error(ErrorCode::kMissingArtifact,
                "missing " + p.string() + " (run `kprompt " + stage + "` first)");
  }
}

fs::path ingest_dir(const RunConfig& c) { return c.run_dir / "ingest"; }
fs::path compile_dir(const RunConfig& c) { return c.run_dir / "compile"; }
fs::path train_dir(const RunConfig& c) { return c.run_dir / "train"; }

void add_words(Vocabulary& vocab, std::string_view text) {
  for (const auto& w : split_words(text)) vocab.add(w.word);
}

std::string strip(std::string s, const std::vector<std::string>& placeholders) {
  for (const auto& p : placeholders) {
    for (auto pos = s.find(p); pos != std::string::npos; pos = s.find(p)) {
      s.replace(pos, p.size(), " ");
    }
  }
  return s;
}

json split_to_json(const SplitSet& s) {
  json train = json::object(), valid = json::object(), test = json::object();
  for (const auto& [u, items] : s.train) train[u] = items;
  for (const auto& [u, h] : s.valid) valid[u] = {{"history", h.history}, {"target", h.target}};
  for (const auto& [u, h] : s.test) test[u] = {{"history", h.history}, {"target", h.target}};
  return {{"train", train}, {"valid", valid}, {"test", test}};
}

SplitSet split_from_json(const json& j) {
  SplitSet s;
  for (const auto& [u, v] : j.at("train").items()) s.train[u] = v.get<std::vector<ItemId>>();
  for (const auto& [u, v] : j.at("valid").items()) {
    s.valid[u] = {v.at("history").get<std::vector<ItemId>>(), v.at("target").get<ItemId>()};
  }
  for (const auto& [u, v] : j.at("test").items()) {
    s.test[u] = {v.at("history").get<std::vector<ItemId>>(), v.at("target").get<ItemId>()};
  }
  return s;
}

KnowledgeGraph load_dataset_kg(const RunConfig& cfg) {
  const auto p = DatasetPaths::in(cfg.dataset_dir());
  std::optional<fs::path> entities;
  if (fs::exists(p.item_entities)) entities = p.item_entities;
  return load_kg(p.triples, p.names, p.relations, entities);
}

std::vector<MppTemplate> load_dataset_templates(const RunConfig& cfg) {
  const auto p = DatasetPaths::in(cfg.dataset_dir()).mpp_templates;
  if (!fs::exists(p)) return default_mpp_templates();
  return load_mpp_templates(p);
}

const MppTemplate& find_template(const std::vector<MppTemplate>& all, int id) {
  for (const auto& t : all) {
    if (t.id == id) return t;
  }
  throw Error(ErrorCode::kConfig, "no MPP template with id " + std::to_string(id));
}

std::vector<ItemId> read_lines(const fs::path& p) {
  auto in = detail::open_input(p);
  std::vector<ItemId> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

void run_synth(const RunConfig& cfg) {
  const auto data = generate(cfg.synth);
  write_dataset(cfg.dataset_dir(), data);
  auto out = detail::open_output(cfg.dataset_dir() / "synth.json");
  out << cfg.synth.to_json().dump(2) << '\n';
  log(cfg, "synth: " + std::to_string(data.log.sequences.size()) + " users, " +
               std::to_string(cfg.synth.n_items) + " items -> " +
               cfg.dataset_dir().string());
}

void run_ingest(const RunConfig& cfg) {
  save_config(cfg);
  const auto paths = DatasetPaths::in(cfg.dataset_dir());
  if (!fs::exists(paths.interactions)) {
    throw Error(ErrorCode::kMissingArtifact,
                "missing " + paths.interactions.string() +
                    " (run `kprompt synth` first or set --data-dir)");
  }
  const auto log_data =
      load_interactions(paths.interactions, cfg.min_user_count, cfg.min_item_count);
  const auto kg = load_dataset_kg(cfg);
  const auto templates = load_dataset_templates(cfg);
  const auto split = split_leave_one_out(log_data, cfg.max_history);

  // Item tokens first, in ascending ItemId order, so token order matches the
  // evaluation tie-break order.
  Vocabulary vocab;
  const auto items = log_data.items();
  for (const auto& i : items) vocab.add(item_token(i));
  for (const auto& u : log_data.users()) vocab.add(user_token(u));
  for (const auto& t : templates) {
    add_words(vocab, strip(t.pattern, {"{user}", "{history}", "{mask}"}));
    add_words(vocab, t.history_separator);
  }
  for (const auto& [rel, t] : kg.templates()) add_words(vocab, strip(t.pattern, {"[X]", "[Y]"}));
  for (const auto& [entity, name] : kg.names()) add_words(vocab, name);

  const auto dir = ingest_dir(cfg);
  write_interactions(dir / "interactions.tsv", log_data);
  vocab.save(dir / "vocab.txt");
  {
    auto out = detail::open_output(dir / "items.txt");
    for (const auto& i : items) out << i << '\n';
  }
  {
    auto out = detail::open_output(dir / "split.json");
    out << split_to_json(split).dump() << '\n';
  }
  log(cfg, "ingest: " + std::to_string(log_data.sequences.size()) + " users, " +
               std::to_string(items.size()) + " items, vocab " +
               std::to_string(vocab.size()));
}

void run_compile(const RunConfig& cfg) {
  save_config(cfg);
  const auto dir = ingest_dir(cfg);
  require(dir / "split.json", "ingest");
  const auto vocab = Vocabulary::load(dir / "vocab.txt");
  const auto kg = load_dataset_kg(cfg);
  const auto templates = load_dataset_templates(cfg);
  SplitSet split;
  {
    auto in = detail::open_input(dir / "split.json");
    split = split_from_json(json::parse(in));
  }

  auto compile_one = [&](const std::string& name, const UserId& user,
                         const std::vector<ItemId>& history, const ItemId& target,
                         int template_id) {
    const auto& tmpl = find_template(templates, template_id);
    CompiledSample s;
    s.split = name;
    s.user = user;
    s.history = history;
    s.target = target;
    s.template_id = template_id;
    auto tok = vocab.find(item_token(target));
    if (!tok) {
      throw Error(ErrorCode::kInvalidArgument, "target item '" + target + "' is not in the vocabulary");
    }
    s.target_token = *tok;
    try {
      const auto mpp = render_mpp(tmpl, user, history);
      const auto compiled = build_tree(mpp, kg, history, cfg.hops, cfg.degree,
                                       vocab, cfg.max_input_tokens);
      s.tokens = compiled.fused.tokens;
      s.mask_position = compiled.mask_position;
      s.nodes = node_records(compiled.tree);
      s.mask = build_mask(compiled.tree, s.tokens.size());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBudgetExceeded) throw;
      throw Error(ErrorCode::kBudgetExceeded,
                  "compile rejected the " + name + " sample of user '" + user +
                      "' (hops=" + std::to_string(cfg.hops) +
                      ", degree=" + std::to_string(cfg.degree) + "): " + e.what());
    }
    return s;
  };

  // Everything is compiled before anything is written, so a budget failure
  // leaves no partial split behind.
  const auto out_dir = compile_dir(cfg);
  fs::remove_all(out_dir);
  std::size_t longest = 0;
  std::vector<std::pair<std::string, std::vector<CompiledSample>>> splits;
  {
    std::vector<CompiledSample> train;
    const auto examples = training_examples(split, cfg.max_history);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& e = examples[i];
      const int t = cfg.train_templates[i % cfg.train_templates.size()];
      train.push_back(compile_one("train", e.user, e.history, e.target, t));
      longest = std::max(longest, train.back().tokens.size());
    }
    splits.emplace_back("train", std::move(train));
  }
  for (const auto& [name, held] : {std::pair{"valid", &split.valid}, std::pair{"test", &split.test}}) {
    std::vector<CompiledSample> samples;
    for (const auto& [user, h] : *held) {
      samples.push_back(compile_one(name, user, h.history, h.target, cfg.eval_template));
      longest = std::max(longest, samples.back().tokens.size());
    }
    splits.emplace_back(name, std::move(samples));
  }
  for (const auto& [name, samples] : splits) {
    write_samples(out_dir / (name + ".jsonl"), samples);
  }
  auto meta = detail::open_output(out_dir / "compile.json");
  meta << json{{"hops", cfg.hops},
               {"degree", cfg.degree},
               {"max_history", cfg.max_history},
               {"max_input_tokens", cfg.max_input_tokens},
               {"longest_sample", longest}}
              .dump(2)
       << '\n';
  log(cfg, "compile: hops=" + std::to_string(cfg.hops) + " degree=" +
               std::to_string(cfg.degree) + ", longest sample " +
               std::to_string(longest) + " tokens");
}

std::vector<EpochStat> run_train(const RunConfig& cfg) {
  save_config(cfg);
  require(compile_dir(cfg) / "train.jsonl", "compile");
  const auto vocab = Vocabulary::load(ingest_dir(cfg) / "vocab.txt");
  const auto samples = read_samples(compile_dir(cfg) / "train.jsonl");
  std::vector<Sequence> data;
  data.reserve(samples.size());
  std::size_t longest = 0;
  for (const auto& s : samples) {
    data.push_back(make_sequence(s, cfg.mask));
    longest = std::max(longest, s.tokens.size());
  }
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  if (static_cast<std::size_t>(mc.max_len) < longest) {
    throw Error(ErrorCode::kConfig,
                "model.max_len " + std::to_string(mc.max_len) +
                    " is shorter than the longest compiled sample (" +
                    std::to_string(longest) + " tokens)");
  }
  auto state = ModelState<float>::init(mc);
  TrainOptions opts;
  opts.optim = cfg.optim;
  opts.checkpoint_dir = train_dir(cfg) / "checkpoints";
  opts.keep_all_checkpoints = false;
  opts.on_epoch = [&](const EpochStat& e) {
    std::ostringstream msg;
    msg << "train: epoch " << e.epoch << " step " << e.step << " loss " << e.loss;
    log(cfg, msg.str());
  };
  auto curve = train(state, data, opts);
  save_checkpoint(train_dir(cfg) / "model.ckpt", state);
  write_loss_curve(train_dir(cfg) / "loss.csv", curve);
  return curve;
}

MetricsReport run_eval(const RunConfig& cfg, const std::string& split) {
  save_config(cfg);
  if (split != "test" && split != "valid") {
    throw Error(ErrorCode::kConfig, "split must be test or valid, got '" + split + "'");
  }
  require(train_dir(cfg) / "model.ckpt", "train");
  const auto state = load_checkpoint(train_dir(cfg) / "model.ckpt");
  const auto vocab = Vocabulary::load(ingest_dir(cfg) / "vocab.txt");
  const auto items = read_lines(ingest_dir(cfg) / "items.txt");
  const auto catalog = ItemCatalog::from_vocabulary(vocab, items);
  const auto samples = read_samples(compile_dir(cfg) / (split + ".jsonl"));
  BeamConfig beam = cfg.beam;
  beam.exclude_seen = cfg.exclude_seen;
  json fp = cfg.fingerprint();
  fp["split"] = split;
  std::vector<UserResult> results;
  auto report = evaluate_split(state, samples, catalog, beam, cfg.ks, cfg.mask,
                               fp, cfg.threads, &results);
  const std::string suffix = split == "test" ? "" : "_" + split;
  write_topk(cfg.run_dir / ("topk" + suffix + ".jsonl"), results);
  write_metrics(cfg.run_dir / ("metrics" + suffix + ".json"), report);
  return report;
}

namespace {

std::vector<int> parse_values(const std::string& spec) {
  std::vector<int> out;
  try {
    if (auto dots = spec.find(".."); dots != std::string::npos) {
      const int lo = std::stoi(spec.substr(0, dots));
      const int hi = std::stoi(spec.substr(dots + 2));
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      std::stringstream ss(spec);
      for (std::string part; std::getline(ss, part, ',');) out.push_back(std::stoi(part));
    }
  } catch (const std::exception&) {
    out.clear();
  }
  if (out.empty()) {
    throw Error(ErrorCode::kConfig, "cannot parse sweep values '" + spec +
                                        "'; use a..b or a,b,c");
  }
  return out;
}

}  // namespace

std::vector<AblationCell> run_ablate(const RunConfig& cfg, const std::string& sweep,
                                     const std::string& mask) {
  const auto eq = sweep.find('=');
  if (eq == std::string::npos) {
    throw Error(ErrorCode::kConfig, "sweep must look like hops=0..3 or degree=2,4,6");
  }
  const std::string key = sweep.substr(0, eq);
  if (key != "hops" && key != "degree") {
    throw Error(ErrorCode::kConfig, "sweep key must be hops or degree, got '" + key + "'");
  }
  const auto values = parse_values(sweep.substr(eq + 1));
  std::vector<bool> masks;
  if (mask == "on" || mask == "true") {
    masks = {true};
  } else if (mask == "off" || mask == "false") {
    masks = {false};
  } else if (mask == "both") {
    masks = {false, true};
  } else {
    throw Error(ErrorCode::kConfig, "--mask must be on, off or both, got '" + mask + "'");
  }

  std::vector<AblationCell> cells;
  for (int v : values) {
    for (bool m : masks) {
      RunConfig c = cfg;
      (key == "hops" ? c.hops : c.degree) = v;
      c.mask = m;
      c.data_dir = cfg.dataset_dir();
      c.run_dir = cfg.run_dir / "cells" /
                  ("hops" + std::to_string(c.hops) + "_degree" +
                   std::to_string(c.degree) + (m ? "_mask" : "_nomask"));
      c.validate();
      run_ingest(c);
      run_compile(c);
      run_train(c);
      cells.push_back({c.hops, c.degree, m, run_eval(c)});
      write_ablation_csv(cfg.run_dir / "ablation.csv", cells, cfg.ks);
    }
  }
  return cells;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationCell>& cells,
                        const std::vector<int>& ks) {
  auto out = detail::open_output(path);
  out << "hops,degree,mask";
  for (int k : ks) out << ",HR@" << k << ",NDCG@" << k;
  out << ",users\n";
  out.precision(17);
  for (const auto& c : cells) {
    out << c.hops << ',' << c.degree << ',' << (c.mask ? "on" : "off");
    for (int k : ks) out << ',' << c.report.hr.at(k) << ',' << c.report.ndcg.at(k);
    out << ',' << c.report.users << '\n';
  }
}

}  // namespace kprompt
