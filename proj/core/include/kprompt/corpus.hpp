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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kprompt/prompts.hpp"

namespace kprompt {

using UserId = std::string;
using ItemId = std::string;
using EntityId = std::string;
using RelationId = std::string;

// Orders ids shorter-first, then lexicographically, so numeric ids without
// leading zeros sort numerically.
struct IdLess {
  bool operator()(std::string_view a, std::string_view b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
  using is_transparent = void;
};

struct Interaction {
  ItemId item;
  std::int64_t timestamp = 0;
};

struct InteractionLog {
  std::map<UserId, std::vector<Interaction>, IdLess> sequences;

  std::vector<UserId> users() const;
  // Distinct items in IdLess order.
  std::vector<ItemId> items() const;
  std::size_t interaction_count() const;
};

// Reads `user<TAB>item<TAB>timestamp` rows, no filtering.
InteractionLog read_interactions(const std::filesystem::path& path);

// Iterates to a fixed point where every user has >= min_user_count
// interactions and every item has >= min_item_count interactions overall.
InteractionLog filter_core(InteractionLog log, int min_user_count,
                           int min_item_count);

InteractionLog load_interactions(const std::filesystem::path& path,
                                 int min_user_count = 5,
                                 int min_item_count = 5);

void write_interactions(const std::filesystem::path& path,
                        const InteractionLog& log);

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  auto operator<=>(const Triple&) const = default;
};

struct Edge {
  RelationId relation;
  EntityId tail;

  auto operator<=>(const Edge&) const = default;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Drops self loops and duplicates; validates names and templates.
  KnowledgeGraph(std::vector<Triple> triples,
                 std::map<EntityId, std::string> names,
                 std::map<RelationId, RelationTemplate> templates,
                 std::map<ItemId, EntityId, IdLess> item_entities = {});

  // Sorted by (relation, tail). Empty for unknown entities.
  std::span<const Edge> adjacency(std::string_view entity) const;
  const std::string& name(std::string_view entity) const;
  const RelationTemplate& relation_template(std::string_view relation) const;
  std::optional<EntityId> entity_of(std::string_view item) const;

  const std::vector<Triple>& triples() const { return triples_; }
  const std::map<EntityId, std::string>& names() const { return names_; }
  const std::map<RelationId, RelationTemplate>& templates() const {
    return templates_;
  }
  const std::map<ItemId, EntityId, IdLess>& item_entities() const {
    return item_entities_;
  }

 private:
  std::vector<Triple> triples_;
  std::map<EntityId, std::string> names_;
  std::map<RelationId, RelationTemplate> templates_;
  std::map<ItemId, EntityId, IdLess> item_entities_;
  std::map<EntityId, std::vector<Edge>, std::less<>> adjacency_;
};

KnowledgeGraph load_kg(const std::filesystem::path& triples_path,
                       const std::filesystem::path& names_path,
                       const std::filesystem::path& templates_path,
                       const std::optional<std::filesystem::path>&
                           item_entities_path = std::nullopt);

void write_kg(const std::filesystem::path& triples_path,
              const std::filesystem::path& names_path,
              const std::filesystem::path& templates_path,
              const std::filesystem::path& item_entities_path,
              const KnowledgeGraph& kg);

// First `degree` entries of the sorted adjacency list.
std::vector<Edge> neighbors(const KnowledgeGraph& kg, std::string_view entity,
                            int degree);

struct HeldOut {
  std::vector<ItemId> history;
  ItemId target;
};

struct SplitSet {
  std::map<UserId, std::vector<ItemId>, IdLess> train;
  std::map<UserId, HeldOut, IdLess> valid;
  std::map<UserId, HeldOut, IdLess> test;
};

SplitSet split_leave_one_out(const InteractionLog& log, int max_history = 5);

struct Example {
  UserId user;
  std::vector<ItemId> history;
  ItemId target;
};

// Next-item examples from every train prefix position that has at least one
// preceding item, histories truncated to max_history.
std::vector<Example> training_examples(const SplitSet& split,
                                       int max_history = 5);

}  // namespace kprompt
