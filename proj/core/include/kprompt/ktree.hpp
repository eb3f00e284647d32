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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kprompt/corpus.hpp"
#include "kprompt/prompts.hpp"

namespace kprompt {

inline constexpr int kMaxHops = 3;

enum class NodeKind { kRoot, kItemEntity, kTriplePrompt };

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view s);

struct KTreeNode {
  int id = 0;
  NodeKind kind = NodeKind::kRoot;
  std::optional<int> parent;
  std::vector<int> children;
  int depth = 0;
  // Item entity for kItemEntity (absent when the item has no KG link), tail
  // entity for kTriplePrompt.
  std::optional<EntityId> entity;
  std::optional<Triple> triple;
  std::string text;
  // Token ranges in the fused sequence. Only the root is non-contiguous.
  std::vector<Span> token_spans;
};

struct KnowledgeTree {
  std::vector<KTreeNode> nodes;
  int hops = 0;
  int degree = 0;

  const KTreeNode& node(int id) const;
  // Owning node of every token in [0, length). Throws kCoverage when a token
  // is covered by zero or several nodes.
  std::vector<int> token_owners(std::size_t length) const;
};

struct SubgraphPrompt {
  int depth = 0;
  Triple triple;
  std::string text;
  // Index of the prompt that introduced triple.head; empty at depth 1.
  std::optional<std::size_t> parent;
};

// Breadth-first n-hop expansion capped at `degree` tails per entity. A tail
// already on the path from `entity` is emitted but not expanded again.
std::vector<SubgraphPrompt> subgraph_prompts(const KnowledgeGraph& kg,
                                             std::string_view entity,
                                             int hops, int degree);

struct CompiledPrompt {
  KnowledgeTree tree;
  TokenSeq fused;
  std::size_t mask_position = 0;
};

// Builds the knowledge tree for one MPP and fuses MPP and level-order KP into
// one token sequence. `mpp` must come from render_mpp over `history`.
CompiledPrompt build_tree(const PromptText& mpp, const KnowledgeGraph& kg,
                          std::span<const ItemId> history, int hops,
                          int degree, const Vocabulary& vocab,
                          std::size_t max_input_tokens = 512);

}  // namespace kprompt
