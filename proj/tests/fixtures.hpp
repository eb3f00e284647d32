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

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kprompt/corpus.hpp"
#include "kprompt/generate.hpp"
#include "kprompt/ktree.hpp"
#include "kprompt/maskgen.hpp"
#include "kprompt/model.hpp"
#include "kprompt/prompts.hpp"
#include "kprompt/record.hpp"

namespace kprompt::testing {

inline const MppTemplate& default_template() {
  static const MppTemplate t{
      1, "User {user} has previously watched {history}, and is going to watch {mask} next.", ", "};
  return t;
}

inline void add_words(Vocabulary& v, std::string_view text) {
  for (const auto& w : split_words(text)) v.add(w.word);
}

// Two watched movies. A has two 1-hop triples whose tails expand to three
// 2-hop triples; B has two 1-hop triples and nothing further.
struct CastAwayFixture {
  KnowledgeGraph kg;
  Vocabulary vocab;
  std::vector<ItemId> history{"1", "2"};

  // Node ids in level order.
  static constexpr int kRoot = 0, kA = 1, kB = 2, kAA1 = 3, kAA2 = 4, kBB1 = 5,
                       kBB2 = 6, kA1A11 = 7, kA1A12 = 8, kA2A21 = 9;

  CastAwayFixture() {
    std::vector<Triple> triples = {
        {"A", "genre", "A1"},          {"A", "starring", "A2"},
        {"A1", "includes", "A11"},     {"A1", "includes", "A12"},
        {"A2", "acted_in", "A21"},     {"B", "genre", "B1"},
        {"B", "starring", "B2"},
    };
    std::map<EntityId, std::string> names = {
        {"A", "Cast Away"},  {"A1", "Adventure"}, {"A2", "Tom Hanks"},
        {"A11", "Survival"}, {"A12", "Shipwreck"}, {"A21", "Big"},
        {"B", "Toy Story"},  {"B1", "Animation"},  {"B2", "Tim Allen"},
    };
    std::map<RelationId, RelationTemplate> templates = {
        {"genre", {"genre", "The genre of [X] is [Y]."}},
        {"starring", {"starring", "[X] starring [Y]."}},
        {"includes", {"includes", "[X] includes [Y]."}},
        {"acted_in", {"acted_in", "[X] acted in [Y]."}},
    };
    kg = KnowledgeGraph(triples, names, templates, {{"1", "A"}, {"2", "B"}});
    vocab.add(item_token("1"));
    vocab.add(item_token("2"));
    vocab.add(user_token("u"));
    add_words(vocab, "User has previously watched , and is going to watch next .");
    for (const auto& [e, n] : names) add_words(vocab, n);
    add_words(vocab, "The genre of is starring includes acted in");
  }

  PromptText mpp() const { return render_mpp(default_template(), "u", history); }

  CompiledPrompt compile(int hops = 2, int degree = 4) const {
    return build_tree(mpp(), kg, history, hops, degree, vocab, 1u << 20);
  }
};

// Random sparse KG with a history of items mapped onto random entities.
struct RandomTreeCase {
  KnowledgeGraph kg;
  Vocabulary vocab;
  std::vector<ItemId> history;
  int hops = 0;
  int degree = 1;
};

inline RandomTreeCase random_tree_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  RandomTreeCase c;
  const int n_entities = 4 + pick(12);
  const int n_relations = 1 + pick(3);
  std::vector<Triple> triples;
  std::map<EntityId, std::string> names;
  std::map<RelationId, RelationTemplate> templates;
  for (int r = 0; r < n_relations; ++r) {
    const std::string rel = "r" + std::to_string(r);
    templates[rel] = {rel, "[X] rel" + std::to_string(r) + " [Y] ."};
  }
  for (int e = 0; e < n_entities; ++e) {
    names["e" + std::to_string(e)] = "ent" + std::to_string(e);
    const int out = pick(4);
    for (int k = 0; k < out; ++k) {
      triples.push_back({"e" + std::to_string(e), "r" + std::to_string(pick(n_relations)),
                         "e" + std::to_string(pick(n_entities))});
    }
  }
  const int n_hist = 1 + pick(5);
  std::map<ItemId, EntityId, IdLess> items;
  for (int i = 0; i < n_hist; ++i) {
    const std::string item = std::to_string(1 + pick(8));
    c.history.push_back(item);
    // Some items have no entity at all.
    if (pick(5) != 0) items[item] = "e" + std::to_string(pick(n_entities));
  }
  c.kg = KnowledgeGraph(triples, names, templates, items);
  for (int i = 1; i <= 8; ++i) c.vocab.add(item_token(std::to_string(i)));
  c.vocab.add(user_token("u"));
  add_words(c.vocab, default_template().pattern);
  for (const auto& [e, n] : names) add_words(c.vocab, n);
  for (int r = 0; r < n_relations; ++r) c.vocab.add("rel" + std::to_string(r));
  c.hops = pick(4);
  c.degree = 1 + pick(5);
  return c;
}

// Visibility from parent links only: same node, parent/child, or siblings
// under one parent.
inline bool oracle_visible(const std::vector<std::optional<int>>& parent, int a, int b) {
  if (a == b) return true;
  const auto pa = parent[static_cast<std::size_t>(a)];
  const auto pb = parent[static_cast<std::size_t>(b)];
  if (pa && *pa == b) return true;
  if (pb && *pb == a) return true;
  return pa && pb && *pa == *pb;
}

inline std::vector<int> owners_by_scan(const KnowledgeTree& tree, std::size_t length) {
  std::vector<int> owner(length, -1);
  for (const auto& n : tree.nodes) {
    for (auto s : n.token_spans) {
      for (auto t = s.begin; t < s.end; ++t) owner[t] = n.id;
    }
  }
  return owner;
}

inline ModelConfig tiny_config(int vocab, std::uint64_t seed = 7) {
  ModelConfig c;
  c.layers_enc = 2;
  c.layers_dec = 2;
  c.d_model = 16;
  c.heads = 2;
  c.d_ff = 32;
  c.vocab_size = vocab;
  c.max_len = 64;
  c.seed = seed;
  return c;
}

// Random encoder sequence with a random symmetric mask.
inline Sequence random_sequence(std::mt19937_64& rng, int vocab, std::size_t len,
                                MaskMatrix& mask, TokenId target) {
  Sequence s;
  for (std::size_t i = 0; i < len; ++i) {
    s.encoder.push_back(static_cast<TokenId>(special::kCount +
                                             rng() % static_cast<std::uint64_t>(vocab - special::kCount)));
  }
  mask = MaskMatrix(len);
  for (std::size_t i = 0; i < len; ++i) {
    mask.set(i, i, true);
    for (std::size_t j = i + 1; j < len; ++j) {
      const bool v = rng() % 3 != 0;
      mask.set(i, j, v);
      mask.set(j, i, v);
    }
  }
  s.mask = &mask;
  s.mask_position = 0;
  s.decoder_input = {special::kBosId, target};
  s.target = {target, special::kEosId};
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("kprompt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace kprompt::testing
