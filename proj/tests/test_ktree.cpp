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
#include "kprompt/ktree.hpp"

namespace kprompt {
namespace {

using Fx = testing::CastAwayFixture;

TEST(KnowledgeTree, CastAwayShape) {
  Fx fx;
  auto c = fx.compile(2, 4);
  const auto& t = c.tree;
  ASSERT_EQ(t.nodes.size(), 10u);
  EXPECT_EQ(t.node(Fx::kRoot).kind, NodeKind::kRoot);
  EXPECT_FALSE(t.node(Fx::kRoot).parent);
  EXPECT_EQ(t.node(Fx::kA).kind, NodeKind::kItemEntity);
  EXPECT_EQ(t.node(Fx::kA).entity, std::optional<EntityId>("A"));
  EXPECT_EQ(t.node(Fx::kAA1).text, "The genre of Cast Away is Adventure.");
  EXPECT_EQ(t.node(Fx::kAA2).text, "Cast Away starring Tom Hanks.");
  EXPECT_EQ(t.node(Fx::kBB1).text, "The genre of Toy Story is Animation.");
  EXPECT_EQ(t.node(Fx::kA1A11).text, "Adventure includes Survival.");
  EXPECT_EQ(t.node(Fx::kA2A21).text, "Tom Hanks acted in Big.");
  EXPECT_EQ(t.node(Fx::kAA1).parent, std::optional<int>(Fx::kA));
  EXPECT_EQ(t.node(Fx::kA1A12).parent, std::optional<int>(Fx::kAA1));
  EXPECT_EQ(t.node(Fx::kA2A21).parent, std::optional<int>(Fx::kAA2));
  EXPECT_EQ(t.node(Fx::kBB2).parent, std::optional<int>(Fx::kB));
  EXPECT_EQ(t.node(Fx::kA1A11).depth, 3);
  EXPECT_EQ(t.node(Fx::kA).children, (std::vector<int>{Fx::kAA1, Fx::kAA2}));
  EXPECT_THROW(t.node(10), Error);
}

TEST(KnowledgeTree, FusedTextIsLevelOrder) {
  Fx fx;
  auto c = fx.compile(2, 4);
  EXPECT_EQ(c.fused.text,
            "[SPE] User user_u has previously watched item_1, item_2, and is going to watch "
            "[mask] next. [SPE] The genre of Cast Away is Adventure. Cast Away starring Tom "
            "Hanks. The genre of Toy Story is Animation. Toy Story starring Tim Allen. "
            "Adventure includes Survival. Adventure includes Shipwreck. Tom Hanks acted in Big. "
            "[SPE]");
  EXPECT_EQ(c.fused.tokens[c.mask_position], special::kMaskId);
  // Tail order follows sorted entity ids: A11 (Survival) before A12.
  EXPECT_EQ(c.tree.node(Fx::kA1A11).triple->tail, "A11");
}

TEST(KnowledgeTree, EveryTokenOwnedOnce) {
  Fx fx;
  auto c = fx.compile(2, 4);
  auto owners = c.tree.token_owners(c.fused.size());
  EXPECT_EQ(owners, testing::owners_by_scan(c.tree, c.fused.size()));
  // [SPE] tokens belong to the root.
  EXPECT_EQ(owners.front(), Fx::kRoot);
  EXPECT_EQ(owners.back(), Fx::kRoot);
  // Item mentions belong to their item nodes.
  const auto& a = c.tree.node(Fx::kA).token_spans;
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].size(), 1u);
  EXPECT_EQ(c.fused.tokens[a[0].begin], *fx.vocab.find("item_1"));
}

TEST(KnowledgeTree, DegreeAndHopsCaps) {
  Fx fx;
  EXPECT_EQ(fx.compile(0, 4).tree.nodes.size(), 3u);
  EXPECT_EQ(fx.compile(1, 4).tree.nodes.size(), 7u);
  auto d1 = fx.compile(2, 1);
  // A -> genre Adventure -> includes Survival; B -> genre Animation.
  EXPECT_EQ(d1.tree.nodes.size(), 3u + 2u + 1u);
  EXPECT_THROW(fx.compile(4, 1), Error);
  EXPECT_THROW(fx.compile(1, 0), Error);
}

TEST(KnowledgeTree, HopZeroIsMppOnly) {
  Fx fx;
  auto c = fx.compile(0, 4);
  EXPECT_TRUE(c.fused.text.ends_with("next. [SPE] [SPE]")) << c.fused.text;
}

TEST(KnowledgeTree, BudgetPropagates) {
  Fx fx;
  try {
    build_tree(fx.mpp(), fx.kg, fx.history, 2, 4, fx.vocab, 40);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBudgetExceeded);
  }
}

TEST(Subgraph, CycleTailEmittedButNotExpanded) {
  KnowledgeGraph kg({{"e1", "r", "e2"}, {"e2", "r", "e1"}}, {{"e1", "One"}, {"e2", "Two"}},
                    {{"r", {"r", "[X] to [Y]."}}});
  auto p = subgraph_prompts(kg, "e1", 3, 5);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].text, "One to Two.");
  EXPECT_EQ(p[1].text, "Two to One.");
  EXPECT_EQ(p[1].depth, 2);
  EXPECT_EQ(p[1].parent, std::optional<std::size_t>(0));
}

TEST(Subgraph, SharedTailExpandedPerPath) {
  // Diamond: both branches reach d, which is expanded under each.
  KnowledgeGraph kg({{"a", "r", "b"}, {"a", "r", "c"}, {"b", "r", "d"}, {"c", "r", "d"}, {"d", "r", "e"}},
                    {{"a", "A"}, {"b", "B"}, {"c", "C"}, {"d", "D"}, {"e", "E"}},
                    {{"r", {"r", "[X] to [Y]."}}});
  auto p = subgraph_prompts(kg, "a", 3, 5);
  ASSERT_EQ(p.size(), 6u);
  EXPECT_EQ(p[4].text, "D to E.");
  EXPECT_EQ(p[5].text, "D to E.");
  EXPECT_NE(p[4].parent, p[5].parent);
}

TEST(KnowledgeTree, ItemWithoutEntityHasNoSubtree) {
  Fx fx;
  std::vector<ItemId> history = {"1", "9"};
  fx.vocab.add(item_token("9"));
  auto mpp = render_mpp(testing::default_template(), "u", history);
  auto c = build_tree(mpp, fx.kg, history, 1, 4, fx.vocab, 512);
  EXPECT_FALSE(c.tree.node(2).entity);
  EXPECT_TRUE(c.tree.node(2).children.empty());
  EXPECT_EQ(c.tree.nodes.size(), 5u);
}

}  // namespace
}  // namespace kprompt
