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

#include "kprompt/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_map>

#include "kprompt/error.hpp"
#include "tsv.hpp"

namespace kprompt {

std::vector<UserId> InteractionLog::users() const {
  std::vector<UserId> out;
  out.reserve(sequences.size());
  for (const auto& [user, _] : sequences) out.push_back(user);
  return out;
}

std::vector<ItemId> InteractionLog::items() const {
  std::set<ItemId, IdLess> seen;
  for (const auto& [_, seq] : sequences) {
    for (const auto& it : seq) seen.insert(it.item);
  }
  return {seen.begin(), seen.end()};
}

std::size_t InteractionLog::interaction_count() const {
  std::size_t n = 0;
  for (const auto& [_, seq] : sequences) n += seq.size();
  return n;
}

InteractionLog read_interactions(const std::filesystem::path& path) {
  InteractionLog log;
  detail::for_each_row(path, 3, [&](const auto& f, std::size_t line_no) {
    std::int64_t ts = 0;
    auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), ts);
    if (ec != std::errc() || ptr != f[2].data() + f[2].size()) {
      throw ParseError(path.string(), line_no,
                       "timestamp is not an integer: '" + std::string(f[2]) +
                           "'");
    }
    log.sequences[std::string(f[0])].push_back({std::string(f[1]), ts});
  });
  // Stable sort keeps file order for equal timestamps.
  for (auto& [_, seq] : log.sequences) {
    std::stable_sort(seq.begin(), seq.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
  }
  return log;
}

InteractionLog filter_core(InteractionLog log, int min_user_count,
                           int min_item_count) {
  while (true) {
    std::unordered_map<ItemId, int> item_counts;
    for (const auto& [_, seq] : log.sequences) {
      for (const auto& it : seq) ++item_counts[it.item];
    }
    bool changed = false;
    for (auto u = log.sequences.begin(); u != log.sequences.end();) {
      auto& seq = u->second;
      auto keep_end = std::remove_if(seq.begin(), seq.end(), [&](const auto& it) {
        return item_counts[it.item] < min_item_count;
      });
      if (keep_end != seq.end()) {
        seq.erase(keep_end, seq.end());
        changed = true;
      }
      if (static_cast<int>(seq.size()) < min_user_count || seq.empty()) {
        u = log.sequences.erase(u);
        changed = true;
      } else {
        ++u;
      }
    }
    if (!changed) return log;
  }
}

InteractionLog load_interactions(const std::filesystem::path& path,
                                 int min_user_count, int min_item_count) {
  auto log = filter_core(read_interactions(path), min_user_count,
                         min_item_count);
  if (log.sequences.empty()) {
    throw Error(ErrorCode::kEmptyCorpus,
                "no interactions left in " + path.string() +
                    " after filtering (min_user_count=" +
                    std::to_string(min_user_count) +
                    ", min_item_count=" + std::to_string(min_item_count) + ")");
  }
  return log;
}

void write_interactions(const std::filesystem::path& path,
                        const InteractionLog& log) {
  auto out = detail::open_output(path);
  for (const auto& [user, seq] : log.sequences) {
    for (const auto& it : seq) {
      out << user << '\t' << it.item << '\t' << it.timestamp << '\n';
    }
  }
}

KnowledgeGraph::KnowledgeGraph(std::vector<Triple> triples,
                               std::map<EntityId, std::string> names,
                               std::map<RelationId, RelationTemplate> templates,
                               std::map<ItemId, EntityId, IdLess> item_entities)
    : names_(std::move(names)),
      templates_(std::move(templates)),
      item_entities_(std::move(item_entities)) {
  std::erase_if(triples, [](const Triple& t) { return t.head == t.tail; });
  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

  for (const auto& [rel, tmpl] : templates_) tmpl.validate();
  for (const auto& t : triples) {
    if (!templates_.contains(t.relation)) {
      throw Error(ErrorCode::kMissingTemplate,
                  "relation '" + t.relation + "' has no relation template");
    }
    for (const auto* e : {&t.head, &t.tail}) {
      if (!names_.contains(*e)) {
        throw Error(ErrorCode::kMissingName,
                    "entity '" + *e + "' has no display name");
      }
    }
    adjacency_[t.head].push_back({t.relation, t.tail});
  }
  // Triples are sorted by (head, relation, tail), so each list already is.
  triples_ = std::move(triples);
}

std::span<const Edge> KnowledgeGraph::adjacency(std::string_view entity) const {
  auto it = adjacency_.find(entity);
  if (it == adjacency_.end()) return {};
  return it->second;
}

const std::string& KnowledgeGraph::name(std::string_view entity) const {
  auto it = names_.find(std::string(entity));
  if (it == names_.end()) {
    throw Error(ErrorCode::kMissingName,
                "entity '" + std::string(entity) + "' has no display name");
  }
  return it->second;
}

const RelationTemplate& KnowledgeGraph::relation_template(
    std::string_view relation) const {
  auto it = templates_.find(std::string(relation));
  if (it == templates_.end()) {
    throw Error(ErrorCode::kMissingTemplate,
                "relation '" + std::string(relation) +
                    "' has no relation template");
  }
  return it->second;
}

std::optional<EntityId> KnowledgeGraph::entity_of(std::string_view item) const {
  auto it = item_entities_.find(item);
  if (it == item_entities_.end()) return std::nullopt;
  return it->second;
}

KnowledgeGraph load_kg(const std::filesystem::path& triples_path,
                       const std::filesystem::path& names_path,
                       const std::filesystem::path& templates_path,
                       const std::optional<std::filesystem::path>&
                           item_entities_path) {
  std::vector<Triple> triples;
  detail::for_each_row(triples_path, 3, [&](const auto& f, std::size_t) {
    triples.push_back(
        {std::string(f[0]), std::string(f[1]), std::string(f[2])});
  });
  std::map<EntityId, std::string> names;
  detail::for_each_row(names_path, 2, [&](const auto& f, std::size_t line) {
    auto [it, inserted] = names.emplace(std::string(f[0]), std::string(f[1]));
    if (!inserted && it->second != f[1]) {
      throw ParseError(names_path.string(), line,
                       "conflicting name for entity '" + it->first + "'");
    }
  });
  std::map<ItemId, EntityId, IdLess> item_entities;
  if (item_entities_path) {
    detail::for_each_row(*item_entities_path, 2,
                         [&](const auto& f, std::size_t) {
                           item_entities[std::string(f[0])] = std::string(f[1]);
                         });
  }
  return KnowledgeGraph(std::move(triples), std::move(names),
                        load_relation_templates(templates_path),
                        std::move(item_entities));
}

void write_kg(const std::filesystem::path& triples_path,
              const std::filesystem::path& names_path,
              const std::filesystem::path& templates_path,
              const std::filesystem::path& item_entities_path,
              const KnowledgeGraph& kg) {
  {
    auto out = detail::open_output(triples_path);
    for (const auto& t : kg.triples()) {
      out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
    }
  }
  {
    auto out = detail::open_output(names_path);
    for (const auto& [e, n] : kg.names()) out << e << '\t' << n << '\n';
  }
  {
    auto out = detail::open_output(item_entities_path);
    for (const auto& [i, e] : kg.item_entities()) out << i << '\t' << e << '\n';
  }
  save_relation_templates(templates_path, kg.templates());
}

std::vector<Edge> neighbors(const KnowledgeGraph& kg, std::string_view entity,
                            int degree) {
  if (degree < 0) {
    throw Error(ErrorCode::kInvalidArgument, "degree must be >= 0");
  }
  auto adj = kg.adjacency(entity);
  auto n = std::min<std::size_t>(adj.size(), static_cast<std::size_t>(degree));
  return {adj.begin(), adj.begin() + static_cast<std::ptrdiff_t>(n)};
}

namespace {

std::vector<ItemId> last_n(std::span<const Interaction> seq, std::size_t end,
                           int max_history) {
  std::size_t begin =
      end > static_cast<std::size_t>(max_history) ? end - max_history : 0;
  std::vector<ItemId> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(seq[i].item);
  return out;
}

}  // namespace

SplitSet split_leave_one_out(const InteractionLog& log, int max_history) {
  if (max_history < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_history must be >= 1");
  }
  SplitSet split;
  for (const auto& [user, seq] : log.sequences) {
    const std::size_t n = seq.size();
    if (n < 3) {
      throw Error(ErrorCode::kSequenceTooShort,
                  "user '" + user + "' has " + std::to_string(n) +
                      " interactions; leave-one-out needs at least 3");
    }
    auto& train = split.train[user];
    for (std::size_t i = 0; i + 2 < n; ++i) train.push_back(seq[i].item);
    split.valid[user] = {last_n(seq, n - 2, max_history), seq[n - 2].item};
    split.test[user] = {last_n(seq, n - 1, max_history), seq[n - 1].item};
  }
  return split;
}

std::vector<Example> training_examples(const SplitSet& split, int max_history) {
  std::vector<Example> out;
  for (const auto& [user, items] : split.train) {
    for (std::size_t j = 1; j < items.size(); ++j) {
      std::size_t begin = j > static_cast<std::size_t>(max_history)
                              ? j - max_history
                              : 0;
      out.push_back({user,
                     {items.begin() + static_cast<std::ptrdiff_t>(begin),
                      items.begin() + static_cast<std::ptrdiff_t>(j)},
                     items[j]});
    }
  }
  return out;
}

}  // namespace kprompt
