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

#include "kprompt/ktree.hpp"

#include <algorithm>

#include "kprompt/error.hpp"

namespace kprompt {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kRoot:
      return "root";
    case NodeKind::kItemEntity:
      return "item";
    case NodeKind::kTriplePrompt:
      return "triple";
  }
  return "?";
}

NodeKind node_kind_from_string(std::string_view s) {
  if (s == "root") return NodeKind::kRoot;
  if (s == "item") return NodeKind::kItemEntity;
  if (s == "triple") return NodeKind::kTriplePrompt;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown node kind '" + std::string(s) + "'");
}

const KTreeNode& KnowledgeTree::node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "node id " + std::to_string(id) + " out of range [0, " +
                    std::to_string(nodes.size()) + ")");
  }
  return nodes[static_cast<std::size_t>(id)];
}

std::vector<int> KnowledgeTree::token_owners(std::size_t length) const {
  std::vector<int> owner(length, -1);
  for (const auto& n : nodes) {
    for (auto span : n.token_spans) {
      if (span.end > length) {
        throw Error(ErrorCode::kCoverage,
                    "node " + std::to_string(n.id) + " spans token " +
                        std::to_string(span.end - 1) + " beyond length " +
                        std::to_string(length));
      }
      for (std::size_t t = span.begin; t < span.end; ++t) {
        if (owner[t] != -1) {
          throw Error(ErrorCode::kCoverage,
                      "token " + std::to_string(t) + " is covered by nodes " +
                          std::to_string(owner[t]) + " and " +
                          std::to_string(n.id));
        }
        owner[t] = n.id;
      }
    }
  }
  auto gap = std::find(owner.begin(), owner.end(), -1);
  if (gap != owner.end()) {
    throw Error(ErrorCode::kCoverage,
                "token " + std::to_string(gap - owner.begin()) +
                    " is not covered by any knowledge-tree node");
  }
  return owner;
}

std::vector<SubgraphPrompt> subgraph_prompts(const KnowledgeGraph& kg,
                                             std::string_view entity,
                                             int hops, int degree) {
  if (hops < 1) throw Error(ErrorCode::kInvalidArgument, "hops must be >= 1");
  struct Frontier {
    EntityId entity;
    std::optional<std::size_t> prompt;
    std::vector<EntityId> path;
  };
  std::vector<SubgraphPrompt> out;
  std::vector<Frontier> frontier{{EntityId(entity), std::nullopt,
                                  {EntityId(entity)}}};
  for (int depth = 1; depth <= hops && !frontier.empty(); ++depth) {
    std::vector<Frontier> next;
    for (const auto& f : frontier) {
      for (const auto& edge : neighbors(kg, f.entity, degree)) {
        const auto& tmpl = kg.relation_template(edge.relation);
        out.push_back({depth,
                       {f.entity, edge.relation, edge.tail},
                       render_triple(tmpl, kg.name(f.entity),
                                     kg.name(edge.tail))
                           .text,
                       f.prompt});
        if (std::find(f.path.begin(), f.path.end(), edge.tail) ==
            f.path.end()) {
          auto path = f.path;
          path.push_back(edge.tail);
          next.push_back({edge.tail, out.size() - 1, std::move(path)});
        }
      }
    }
    frontier = std::move(next);
  }
  return out;
}

CompiledPrompt build_tree(const PromptText& mpp, const KnowledgeGraph& kg,
                          std::span<const ItemId> history, int hops,
                          int degree, const Vocabulary& vocab,
                          std::size_t max_input_tokens) {
  if (hops < 0 || hops > kMaxHops) {
    throw Error(ErrorCode::kInvalidArgument,
                "hops must be in [0, " + std::to_string(kMaxHops) + "], got " +
                    std::to_string(hops));
  }
  if (degree < 1) throw Error(ErrorCode::kInvalidArgument, "degree must be >= 1");
  if (mpp.item_spans.size() != history.size() || !mpp.mask_span) {
    throw Error(ErrorCode::kInvalidArgument,
                "MPP text does not match the history it was built from");
  }

  const TokenSeq mpp_tokens = tokenize(mpp.text, vocab);
  KnowledgeTree tree;
  tree.hops = hops;
  tree.degree = degree;
  tree.nodes.push_back({.id = 0, .kind = NodeKind::kRoot});

  std::vector<std::vector<SubgraphPrompt>> per_item(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    KTreeNode item{.id = static_cast<int>(tree.nodes.size()),
                   .kind = NodeKind::kItemEntity,
                   .parent = 0,
                   .depth = 1,
                   .entity = kg.entity_of(history[i]),
                   .text = item_token(history[i])};
    tree.nodes[0].children.push_back(item.id);
    if (item.entity && hops > 0) {
      per_item[i] = subgraph_prompts(kg, *item.entity, hops, degree);
    }
    tree.nodes.push_back(std::move(item));
  }

  // Level order: depth, then history position, then BFS order per item.
  TokenSeq kp;
  std::vector<std::vector<int>> node_ids(history.size());
  std::vector<Span> kp_spans;
  for (int depth = 1; depth <= hops; ++depth) {
    for (std::size_t i = 0; i < history.size(); ++i) {
      node_ids[i].resize(per_item[i].size(), -1);
      for (std::size_t p = 0; p < per_item[i].size(); ++p) {
        const auto& prompt = per_item[i][p];
        if (prompt.depth != depth) continue;
        int parent = prompt.parent ? node_ids[i][*prompt.parent]
                                   : static_cast<int>(1 + i);
        KTreeNode node{.id = static_cast<int>(tree.nodes.size()),
                       .kind = NodeKind::kTriplePrompt,
                       .parent = parent,
                       .depth = depth + 1,
                       .entity = prompt.triple.tail,
                       .triple = prompt.triple,
                       .text = prompt.text};
        node_ids[i][p] = node.id;
        tree.nodes[static_cast<std::size_t>(parent)].children.push_back(
            node.id);

        TokenSeq piece = tokenize(prompt.text, vocab);
        if (!kp.text.empty()) kp.text += ' ';
        std::size_t char_offset = kp.text.size();
        kp.text += piece.text;
        std::size_t tok_begin = kp.tokens.size();
        kp.tokens.insert(kp.tokens.end(), piece.tokens.begin(),
                         piece.tokens.end());
        for (auto s : piece.char_spans) {
          kp.char_spans.push_back({s.begin + char_offset, s.end + char_offset});
        }
        kp_spans.push_back({tok_begin, kp.tokens.size()});
        tree.nodes.push_back(std::move(node));
      }
    }
  }

  CompiledPrompt out;
  out.fused = fuse_prompt(mpp_tokens, kp, vocab, max_input_tokens);
  const std::size_t mpp_offset = 1;
  const std::size_t kp_offset = mpp_tokens.size() + 2;

  std::vector<bool> is_item_token(mpp_tokens.size(), false);
  for (std::size_t i = 0; i < history.size(); ++i) {
    Span s = mpp_tokens.token_span(mpp.item_spans[i].chars);
    for (std::size_t t = s.begin; t < s.end; ++t) is_item_token[t] = true;
    tree.nodes[1 + i].token_spans.push_back(
        {s.begin + mpp_offset, s.end + mpp_offset});
  }
  auto& root_spans = tree.nodes[0].token_spans;
  auto add_root = [&](std::size_t t) {
    if (!root_spans.empty() && root_spans.back().end == t) {
      ++root_spans.back().end;
    } else {
      root_spans.push_back({t, t + 1});
    }
  };
  add_root(0);
  for (std::size_t t = 0; t < mpp_tokens.size(); ++t) {
    if (!is_item_token[t]) add_root(t + mpp_offset);
  }
  add_root(mpp_offset + mpp_tokens.size());
  add_root(out.fused.size() - 1);

  for (std::size_t k = 0; k < kp_spans.size(); ++k) {
    tree.nodes[1 + history.size() + k].token_spans.push_back(
        {kp_spans[k].begin + kp_offset, kp_spans[k].end + kp_offset});
  }

  out.mask_position = mpp_tokens.token_span(*mpp.mask_span).begin + mpp_offset;
  out.tree = std::move(tree);
  return out;
}

}  // namespace kprompt
