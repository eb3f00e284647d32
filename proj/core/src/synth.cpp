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

#include "kprompt/synth.hpp"

#include <algorithm>

#include "kprompt/error.hpp"
#include "rng.hpp"

namespace kprompt {

using json = nlohmann::json;

std::string to_string(SynthRule rule) {
  return rule == SynthRule::kSharedAttrNext ? "shared-attr-next" : "attr-chain-2hop";
}

SynthRule synth_rule_from_string(const std::string& s) {
  if (s == "shared-attr-next") return SynthRule::kSharedAttrNext;
  if (s == "attr-chain-2hop") return SynthRule::kAttrChain2Hop;
  throw Error(ErrorCode::kConfig,
              "synth.rule must be shared-attr-next or attr-chain-2hop, got '" + s + "'");
}

int SynthConfig::groups() const {
  return n_groups > 0 ? n_groups : std::max(2, n_attrs / 10);
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "synth." + msg); };
  if (n_users < 1) fail("n_users must be >= 1");
  if (n_attrs < 1) fail("n_attrs must be >= 1");
  if (n_items < 2 * n_attrs) fail("n_items must be >= 2 * n_attrs");
  if (seq_len < 3) fail("seq_len must be >= 3");
  if (!(noise >= 0.0 && noise <= 1.0)) fail("noise must be in [0, 1]");
  if (rule == SynthRule::kAttrChain2Hop && groups() > n_attrs) {
    fail("n_groups must be <= n_attrs");
  }
}

json SynthConfig::to_json() const {
  return {{"n_users", n_users}, {"n_items", n_items}, {"n_attrs", n_attrs},
          {"n_groups", n_groups}, {"seq_len", seq_len}, {"rule", to_string(rule)},
          {"noise", noise},     {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  c.n_users = j.value("n_users", c.n_users);
  c.n_items = j.value("n_items", c.n_items);
  c.n_attrs = j.value("n_attrs", c.n_attrs);
  c.n_groups = j.value("n_groups", c.n_groups);
  c.seq_len = j.value("seq_len", c.seq_len);
  if (j.contains("rule")) c.rule = synth_rule_from_string(j["rule"].get<std::string>());
  c.noise = j.value("noise", c.noise);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<MppTemplate> default_mpp_templates() {
  const char* patterns[] = {
      "User {user} has previously watched {history}, and is going to watch {mask} next.",
      "Given the watch history {history} of user {user}, the next item is {mask}.",
      "User {user} watched {history} in order; next comes {mask}.",
      "After {history}, user {user} will choose {mask}.",
      "The sequence of user {user} is {history}, followed by {mask}.",
      "User {user} enjoyed {history} and will enjoy {mask} next.",
      "Here is what user {user} has seen: {history}. The next one is {mask}.",
      "Having interacted with {history}, user {user} now picks {mask}.",
      "Predict for user {user}: {history} then {mask}.",
      "User {user} consumed {history}; the following item will be {mask}.",
      "Considering {history}, what will user {user} watch next? {mask}.",
  };
  std::vector<MppTemplate> out;
  int id = 1;
  for (const char* p : patterns) out.push_back({id++, p, ", "});
  return out;
}

namespace {

EntityId item_entity(int i) { return "i" + std::to_string(i); }
EntityId attr_entity(int a) { return "a" + std::to_string(a); }
EntityId group_entity(int g) { return "g" + std::to_string(g); }

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  detail::Rng rng(cfg.seed);
  const int n = cfg.n_items;
  const bool chain = cfg.rule == SynthRule::kAttrChain2Hop;

  // Balanced attribute assignment over a shuffled item order.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i + 1;
  rng.shuffle(order);
  std::vector<int> attr_of(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k < n; ++k) attr_of[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k % cfg.n_attrs;

  std::vector<int> group_of(static_cast<std::size_t>(cfg.n_attrs), 0);
  if (chain) {
    std::vector<int> attrs(static_cast<std::size_t>(cfg.n_attrs));
    for (int a = 0; a < cfg.n_attrs; ++a) attrs[static_cast<std::size_t>(a)] = a;
    rng.shuffle(attrs);
    for (int k = 0; k < cfg.n_attrs; ++k) group_of[static_cast<std::size_t>(attrs[static_cast<std::size_t>(k)])] = k % cfg.groups();
  }

  // Items in the same rule class as each item, excluding the item itself.
  auto cls = [&](int item) {
    const int a = attr_of[static_cast<std::size_t>(item)];
    return chain ? group_of[static_cast<std::size_t>(a)] : a;
  };
  std::vector<std::vector<int>> peers(static_cast<std::size_t>(n) + 1);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      if (i != j && cls(i) == cls(j)) peers[static_cast<std::size_t>(i)].push_back(j);
    }
  }

  SynthData data;
  for (int u = 1; u <= cfg.n_users; ++u) {
    std::vector<Interaction> seq;
    int cur = static_cast<int>(rng.below(static_cast<std::uint64_t>(n))) + 1;
    for (int t = 0; t < cfg.seq_len; ++t) {
      if (t > 0) {
        const auto& p = peers[static_cast<std::size_t>(cur)];
        if (rng.uniform() < cfg.noise || p.empty()) {
          cur = static_cast<int>(rng.below(static_cast<std::uint64_t>(n))) + 1;
        } else {
          cur = p[rng.below(p.size())];
        }
      }
      seq.push_back({std::to_string(cur), t + 1});
    }
    data.log.sequences.emplace(std::to_string(u), std::move(seq));
  }

  std::vector<Triple> triples;
  std::map<EntityId, std::string> names;
  std::map<ItemId, EntityId, IdLess> item_entities;
  for (int i = 1; i <= n; ++i) {
    const auto a = attr_of[static_cast<std::size_t>(i)];
    triples.push_back({item_entity(i), "has_attr", attr_entity(a)});
    names[item_entity(i)] = item_token(std::to_string(i));
    item_entities[std::to_string(i)] = item_entity(i);
    data.item_attribute[std::to_string(i)] = attr_entity(a);
  }
  for (int a = 0; a < cfg.n_attrs; ++a) {
    names[attr_entity(a)] = "attr_" + std::to_string(a);
    if (chain) {
      const int g = group_of[static_cast<std::size_t>(a)];
      triples.push_back({attr_entity(a), "in_group", group_entity(g)});
      names[group_entity(g)] = "group_" + std::to_string(g);
      data.attribute_group[attr_entity(a)] = group_entity(g);
    }
  }
  std::map<RelationId, RelationTemplate> templates;
  templates["has_attr"] = {"has_attr", "[X] has attribute [Y]."};
  if (chain) templates["in_group"] = {"in_group", "[X] belongs to [Y]."};
  data.kg = KnowledgeGraph(std::move(triples), std::move(names),
                           std::move(templates), std::move(item_entities));
  data.mpp_templates = default_mpp_templates();
  return data;
}

DatasetPaths DatasetPaths::in(const std::filesystem::path& dir) {
  return {dir / "interactions.tsv", dir / "triples.tsv",
          dir / "entity_names.tsv", dir / "relation_templates.json",
          dir / "item_entities.tsv", dir / "mpp_templates.json"};
}

void write_dataset(const std::filesystem::path& dir, const SynthData& data) {
  const auto p = DatasetPaths::in(dir);
  write_interactions(p.interactions, data.log);
  write_kg(p.triples, p.names, p.relations, p.item_entities, data.kg);
  save_mpp_templates(p.mpp_templates, data.mpp_templates);
}

}  // namespace kprompt
