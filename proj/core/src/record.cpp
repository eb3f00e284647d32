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

#include "kprompt/record.hpp"

#include "kprompt/error.hpp"
#include "tsv.hpp"

namespace kprompt {

using json = nlohmann::json;

KnowledgeTree CompiledSample::skeleton() const {
  KnowledgeTree tree;
  tree.nodes.resize(nodes.size());
  for (const auto& r : nodes) {
    if (r.id < 0 || static_cast<std::size_t>(r.id) >= nodes.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "node id " + std::to_string(r.id) + " out of range");
    }
    auto& n = tree.nodes[static_cast<std::size_t>(r.id)];
    n.id = r.id;
    n.kind = r.kind;
    n.parent = r.parent;
    n.token_spans = r.spans;
  }
  for (const auto& n : tree.nodes) {
    if (n.parent) {
      tree.nodes[static_cast<std::size_t>(*n.parent)].children.push_back(n.id);
    }
  }
  return tree;
}

std::vector<NodeRecord> node_records(const KnowledgeTree& tree) {
  std::vector<NodeRecord> out;
  out.reserve(tree.nodes.size());
  for (const auto& n : tree.nodes) {
    out.push_back({n.id, n.kind, n.parent, n.token_spans});
  }
  return out;
}

json to_json(const CompiledSample& s) {
  json nodes = json::array();
  for (const auto& n : s.nodes) {
    json spans = json::array();
    for (auto sp : n.spans) spans.push_back({sp.begin, sp.end});
    nodes.push_back({{"id", n.id},
                     {"kind", to_string(n.kind)},
                     {"parent", n.parent ? json(*n.parent) : json(nullptr)},
                     {"spans", std::move(spans)}});
  }
  return {{"split", s.split},
          {"user", s.user},
          {"history", s.history},
          {"target", s.target},
          {"target_token", s.target_token},
          {"template", s.template_id},
          {"tokens", s.tokens},
          {"mask_position", s.mask_position},
          {"nodes", std::move(nodes)},
          {"mask", s.mask.to_hex()}};
}

CompiledSample sample_from_json(const json& j) {
  CompiledSample s;
  s.split = j.at("split").get<std::string>();
  s.user = j.at("user").get<std::string>();
  s.history = j.at("history").get<std::vector<std::string>>();
  s.target = j.at("target").get<std::string>();
  s.target_token = j.at("target_token").get<TokenId>();
  s.template_id = j.at("template").get<int>();
  s.tokens = j.at("tokens").get<std::vector<TokenId>>();
  s.mask_position = j.at("mask_position").get<std::size_t>();
  for (const auto& n : j.at("nodes")) {
    NodeRecord r;
    r.id = n.at("id").get<int>();
    r.kind = node_kind_from_string(n.at("kind").get<std::string>());
    if (!n.at("parent").is_null()) r.parent = n["parent"].get<int>();
    for (const auto& sp : n.at("spans")) {
      r.spans.push_back({sp.at(0).get<std::size_t>(), sp.at(1).get<std::size_t>()});
    }
    s.nodes.push_back(std::move(r));
  }
  if (!j.contains("mask") || !j["mask"].is_string()) {
    throw Error(ErrorCode::kMissingArtifact,
                "compiled sample for user '" + s.user + "' has no mask");
  }
  s.mask = MaskMatrix::from_hex(j["mask"].get<std::string>());
  if (s.mask.size() != s.tokens.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "mask size " + std::to_string(s.mask.size()) +
                    " does not match " + std::to_string(s.tokens.size()) +
                    " tokens for user '" + s.user + "'");
  }
  return s;
}

void write_samples(const std::filesystem::path& path,
                   const std::vector<CompiledSample>& samples) {
  auto out = detail::open_output(path);
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

std::vector<CompiledSample> read_samples(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingArtifact,
                "missing compiled samples " + path.string() +
                    " (run `kprompt compile` first)");
  }
  auto in = detail::open_input(path);
  std::vector<CompiledSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

}  // namespace kprompt
