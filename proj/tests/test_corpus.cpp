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
#include "kprompt/corpus.hpp"
#include "kprompt/error.hpp"

namespace kprompt {
namespace {

using testing::TempDir;
using testing::write_file;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no kprompt::Error thrown";
  return ErrorCode::kIo;
}

TEST(IdLess, NumericIdsSortNumerically) {
  std::vector<std::string> ids = {"10", "9", "100", "1", "b", "a2"};
  std::sort(ids.begin(), ids.end(), IdLess{});
  EXPECT_EQ(ids, (std::vector<std::string>{"1", "9", "b", "10", "a2", "100"}));
}

TEST(Interactions, SortedByTimestampStable) {
  TempDir dir("corpus");
  write_file(dir / "log.tsv", "u1\tc\t30\nu1\ta\t10\nu1\tb\t10\nu2\tx\t5\r\n\n");
  auto log = read_interactions(dir / "log.tsv");
  ASSERT_EQ(log.sequences.size(), 2u);
  const auto& seq = log.sequences.at("u1");
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq[0].item, "a");
  EXPECT_EQ(seq[1].item, "b");
  EXPECT_EQ(seq[2].item, "c");
  EXPECT_EQ(log.interaction_count(), 4u);
}

TEST(Interactions, ParseErrorNamesLine) {
  TempDir dir("corpus");
  write_file(dir / "log.tsv", "u1\ta\t1\nu1\tb\tlater\n");
  try {
    read_interactions(dir / "log.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  write_file(dir / "cols.tsv", "u1\ta\n");
  EXPECT_EQ(code_of([&] { read_interactions(dir / "cols.tsv"); }), ErrorCode::kParse);
}

TEST(Interactions, CoreFilterReachesFixedPoint) {
  // Dropping z leaves u3 with one interaction; losing u3 drops w, which in
  // turn drops u4.
  InteractionLog log;
  log.sequences["u1"] = {{"x", 1}, {"y", 2}};
  log.sequences["u2"] = {{"x", 1}, {"y", 2}};
  log.sequences["u3"] = {{"z", 1}, {"w", 2}};
  log.sequences["u4"] = {{"w", 1}, {"x", 2}};
  auto out = filter_core(log, 2, 2);
  EXPECT_EQ(out.users(), (std::vector<UserId>{"u1", "u2"}));
  EXPECT_EQ(out.items(), (std::vector<ItemId>{"x", "y"}));
}

TEST(Interactions, EmptyAfterFilterIsAnError) {
  TempDir dir("corpus");
  write_file(dir / "log.tsv", "u1\ta\t1\n");
  EXPECT_EQ(code_of([&] { load_interactions(dir / "log.tsv"); }), ErrorCode::kEmptyCorpus);
}

TEST(Interactions, WriteReadRoundTrip) {
  TempDir dir("corpus");
  InteractionLog log;
  log.sequences["2"] = {{"5", 1}, {"6", 2}};
  log.sequences["10"] = {{"7", 3}};
  write_interactions(dir / "out.tsv", log);
  auto back = read_interactions(dir / "out.tsv");
  EXPECT_EQ(back.users(), (std::vector<UserId>{"2", "10"}));
  EXPECT_EQ(back.sequences.at("10")[0].timestamp, 3);
}

KnowledgeGraph small_kg() {
  return KnowledgeGraph(
      {{"h", "r2", "t1"}, {"h", "r1", "t2"}, {"h", "r1", "t1"}, {"h", "r1", "t1"}, {"t1", "r1", "t1"}},
      {{"h", "H"}, {"t1", "T1"}, {"t2", "T2"}},
      {{"r1", {"r1", "[X] one [Y]."}}, {"r2", {"r2", "[X] two [Y]."}}});
}

TEST(KnowledgeGraph, DedupesDropsSelfLoopsAndSortsAdjacency) {
  auto kg = small_kg();
  EXPECT_EQ(kg.triples().size(), 3u);
  auto adj = kg.adjacency("h");
  ASSERT_EQ(adj.size(), 3u);
  EXPECT_EQ(adj[0], (Edge{"r1", "t1"}));
  EXPECT_EQ(adj[1], (Edge{"r1", "t2"}));
  EXPECT_EQ(adj[2], (Edge{"r2", "t1"}));
  EXPECT_TRUE(kg.adjacency("t1").empty());
  EXPECT_TRUE(kg.adjacency("nobody").empty());
}

TEST(KnowledgeGraph, NeighborsArePrefixOfAdjacency) {
  auto kg = small_kg();
  EXPECT_EQ(neighbors(kg, "h", 2).size(), 2u);
  EXPECT_EQ(neighbors(kg, "h", 2)[1], (Edge{"r1", "t2"}));
  EXPECT_EQ(neighbors(kg, "h", 10).size(), 3u);
  EXPECT_TRUE(neighbors(kg, "h", 0).empty());
  EXPECT_EQ(code_of([&] { neighbors(kg, "h", -1); }), ErrorCode::kInvalidArgument);
}

TEST(KnowledgeGraph, MissingTemplateNamesRelation) {
  try {
    KnowledgeGraph({{"h", "made_by", "t"}}, {{"h", "H"}, {"t", "T"}}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingTemplate);
    EXPECT_NE(std::string(e.what()).find("made_by"), std::string::npos);
  }
  EXPECT_EQ(code_of([] {
              KnowledgeGraph({{"h", "r", "t"}}, {{"h", "H"}}, {{"r", {"r", "[X] r [Y]."}}});
            }),
            ErrorCode::kMissingName);
}

TEST(KnowledgeGraph, FileRoundTrip) {
  TempDir dir("kg");
  auto kg = KnowledgeGraph({{"e1", "r", "e2"}}, {{"e1", "One"}, {"e2", "Two"}},
                           {{"r", {"r", "[X] likes [Y]."}}}, {{"7", "e1"}});
  write_kg(dir / "t.tsv", dir / "n.tsv", dir / "r.json", dir / "i.tsv", kg);
  auto back = load_kg(dir / "t.tsv", dir / "n.tsv", dir / "r.json", dir / "i.tsv");
  EXPECT_EQ(back.triples(), kg.triples());
  EXPECT_EQ(back.names(), kg.names());
  EXPECT_EQ(back.entity_of("7"), std::optional<EntityId>("e1"));
  EXPECT_EQ(back.relation_template("r").pattern, "[X] likes [Y].");
}

InteractionLog one_user(int n) {
  InteractionLog log;
  auto& seq = log.sequences["u"];
  for (int i = 1; i <= n; ++i) seq.push_back({"v" + std::to_string(i), i});
  return log;
}

TEST(Split, LeaveOneOutOnFiveItems) {
  auto s = split_leave_one_out(one_user(5), 5);
  EXPECT_EQ(s.train.at("u"), (std::vector<ItemId>{"v1", "v2", "v3"}));
  EXPECT_EQ(s.valid.at("u").history, (std::vector<ItemId>{"v1", "v2", "v3"}));
  EXPECT_EQ(s.valid.at("u").target, "v4");
  EXPECT_EQ(s.test.at("u").history, (std::vector<ItemId>{"v1", "v2", "v3", "v4"}));
  EXPECT_EQ(s.test.at("u").target, "v5");
}

TEST(Split, HistoryTruncatedToMostRecent) {
  auto s = split_leave_one_out(one_user(9), 5);
  EXPECT_EQ(s.test.at("u").history, (std::vector<ItemId>{"v4", "v5", "v6", "v7", "v8"}));
  EXPECT_EQ(s.valid.at("u").history, (std::vector<ItemId>{"v3", "v4", "v5", "v6", "v7"}));
}

TEST(Split, TooShortSequence) {
  EXPECT_EQ(code_of([] { split_leave_one_out(one_user(2)); }), ErrorCode::kSequenceTooShort);
  auto s = split_leave_one_out(one_user(3));
  EXPECT_EQ(s.train.at("u").size(), 1u);
  EXPECT_TRUE(training_examples(s).empty());
}

TEST(Split, TrainingExamplesCoverEveryPrefix) {
  auto s = split_leave_one_out(one_user(10), 3);
  auto ex = training_examples(s, 3);
  ASSERT_EQ(ex.size(), 7u);
  EXPECT_EQ(ex[0].history, (std::vector<ItemId>{"v1"}));
  EXPECT_EQ(ex[0].target, "v2");
  EXPECT_EQ(ex[6].history, (std::vector<ItemId>{"v5", "v6", "v7"}));
  EXPECT_EQ(ex[6].target, "v8");
}

}  // namespace
}  // namespace kprompt
