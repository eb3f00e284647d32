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

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kprompt/error.hpp"
#include "kprompt/synth.hpp"

namespace kprompt {
namespace {

SynthConfig clean(SynthRule rule) {
  SynthConfig c;
  c.rule = rule;
  c.noise = 0.0;
  c.n_users = 50;
  return c;
}

TEST(Synth, SharedAttrFollowsRuleWithoutNoise) {
  auto d = generate(clean(SynthRule::kSharedAttrNext));
  EXPECT_EQ(d.log.sequences.size(), 50u);
  for (const auto& [u, seq] : d.log.sequences) {
    ASSERT_EQ(seq.size(), 8u);
    for (std::size_t t = 1; t < seq.size(); ++t) {
      EXPECT_EQ(d.item_attribute.at(seq[t].item), d.item_attribute.at(seq[t - 1].item));
      EXPECT_NE(seq[t].item, seq[t - 1].item);
    }
  }
}

TEST(Synth, ChainFollowsGroupWithoutNoise) {
  auto c = clean(SynthRule::kAttrChain2Hop);
  c.n_attrs = 40;
  c.n_groups = 4;
  auto d = generate(c);
  std::set<EntityId> groups;
  for (const auto& [a, g] : d.attribute_group) groups.insert(g);
  EXPECT_EQ(groups.size(), 4u);
  for (const auto& [u, seq] : d.log.sequences) {
    for (std::size_t t = 1; t < seq.size(); ++t) {
      EXPECT_EQ(d.attribute_group.at(d.item_attribute.at(seq[t].item)),
                d.attribute_group.at(d.item_attribute.at(seq[t - 1].item)));
    }
  }
}

TEST(Synth, AttributesBalanced) {
  auto d = generate(clean(SynthRule::kSharedAttrNext));
  std::map<EntityId, int> count;
  for (const auto& [i, a] : d.item_attribute) ++count[a];
  EXPECT_EQ(count.size(), 20u);
  for (const auto& [a, n] : count) EXPECT_EQ(n, 10) << a;
}

TEST(Synth, DeterministicPerSeed) {
  SynthConfig c;
  auto a = generate(c);
  auto b = generate(c);
  EXPECT_EQ(a.kg.triples(), b.kg.triples());
  for (const auto& [u, seq] : a.log.sequences) {
    const auto& other = b.log.sequences.at(u);
    ASSERT_EQ(seq.size(), other.size());
    for (std::size_t t = 0; t < seq.size(); ++t) EXPECT_EQ(seq[t].item, other[t].item);
  }
  c.seed = 2;
  EXPECT_NE(generate(c).item_attribute, a.item_attribute);
}

TEST(Synth, ChainFactsAreTwoHopsFromItems) {
  auto c = clean(SynthRule::kAttrChain2Hop);
  auto d = generate(c);
  auto one = subgraph_prompts(d.kg, *d.kg.entity_of("1"), 1, 4);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text.find("group_"), std::string::npos);
  auto two = subgraph_prompts(d.kg, *d.kg.entity_of("1"), 2, 4);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_NE(two[1].text.find("belongs to group_"), std::string::npos) << two[1].text;
  EXPECT_EQ(c.groups(), 2);
}

TEST(Synth, Validation) {
  SynthConfig c;
  c.n_attrs = 150;
  EXPECT_THROW(c.validate(), Error);
  c = SynthConfig{};
  c.noise = 1.5;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(synth_rule_from_string("attr-chain-2hop"), SynthRule::kAttrChain2Hop);
  EXPECT_THROW(synth_rule_from_string("nope"), Error);
  c = SynthConfig{};
  EXPECT_EQ(SynthConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Synth, DefaultTemplates) {
  auto t = default_mpp_templates();
  ASSERT_EQ(t.size(), 11u);
  EXPECT_EQ(t[0].id, 1);
  EXPECT_EQ(t[0].pattern, testing::default_template().pattern);
  std::set<std::string> patterns;
  for (const auto& m : t) {
    EXPECT_NO_THROW(m.validate());
    patterns.insert(m.pattern);
  }
  EXPECT_EQ(patterns.size(), 11u);
}

TEST(Synth, DatasetFilesLoadBack) {
  testing::TempDir dir("synth");
  auto d = generate(SynthConfig{});
  write_dataset(dir.path(), d);
  auto p = DatasetPaths::in(dir.path());
  auto log = read_interactions(p.interactions);
  EXPECT_EQ(log.interaction_count(), d.log.interaction_count());
  auto kg = load_kg(p.triples, p.names, p.relations, p.item_entities);
  EXPECT_EQ(kg.triples(), d.kg.triples());
  EXPECT_EQ(load_mpp_templates(p.mpp_templates).size(), 11u);
}

}  // namespace
}  // namespace kprompt
