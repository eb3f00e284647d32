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

#include "kprompt/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>

#include "kprompt/error.hpp"
#include "tsv.hpp"

namespace kprompt {

using json = nlohmann::json;

std::string user_token(std::string_view user) {
  return "user_" + std::string(user);
}

std::string item_token(std::string_view item) {
  return "item_" + std::string(item);
}

Vocabulary::Vocabulary() {
  for (auto s : {special::kPad, special::kEos, special::kUnk, special::kMask,
                 special::kSpe, special::kBos}) {
    add(s);
  }
}

TokenId Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  return find(token).value_or(unk());
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no <= special::kCount) {
      if (line != vocab.tokens_[line_no - 1]) {
        throw ParseError(path.string(), line_no,
                         "expected reserved token '" +
                             vocab.tokens_[line_no - 1] + "'");
      }
      continue;
    }
    if (line.empty()) throw ParseError(path.string(), line_no, "empty token");
    if (vocab.find(line)) {
      throw ParseError(path.string(), line_no, "duplicate token '" + line + "'");
    }
    vocab.add(line);
  }
  if (line_no < special::kCount) {
    throw ParseError(path.string(), line_no, "missing reserved tokens");
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  auto out = detail::open_output(path);
  for (const auto& t : tokens_) out << t << '\n';
}

namespace {

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace

void MppTemplate::validate() const {
  for (std::string_view ph : {"{user}", "{history}", "{mask}"}) {
    if (count_of(pattern, ph) != 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "MPP template " + std::to_string(id) + " must contain " +
                      std::string(ph) + " exactly once");
    }
  }
}

void RelationTemplate::validate() const {
  for (std::string_view ph : {"[X]", "[Y]"}) {
    if (count_of(pattern, ph) != 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "relation template for '" + relation + "' must contain " +
                      std::string(ph) + " exactly once");
    }
  }
}

Span TokenSeq::token_span(Span chars) const {
  auto first = std::lower_bound(
      char_spans.begin(), char_spans.end(), chars.begin,
      [](const Span& s, std::size_t pos) { return s.begin < pos; });
  std::size_t b = static_cast<std::size_t>(first - char_spans.begin());
  std::size_t e = b;
  while (e < char_spans.size() && char_spans[e].end <= chars.end) ++e;
  bool aligned = b < char_spans.size() && char_spans[b].begin == chars.begin &&
                 e > b && char_spans[e - 1].end == chars.end;
  if (!aligned) {
    throw Error(ErrorCode::kInvalidArgument,
                "character range [" + std::to_string(chars.begin) + ", " +
                    std::to_string(chars.end) +
                    ") is not aligned to token boundaries");
  }
  return {b, e};
}

std::vector<WordPiece> split_words(std::string_view text) {
  std::vector<WordPiece> out;
  const std::size_t n = text.size();
  auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  std::size_t i = 0;
  while (i < n) {
    if (is_space(byte(i))) {
      ++i;
      continue;
    }
    // Bracketed specials: [mask], [SPE], <pad>, </s>, ...
    if (text[i] == '[' || text[i] == '<') {
      char close = text[i] == '[' ? ']' : '>';
      std::size_t j = i + 1;
      while (j < n && text[j] != close && !is_space(byte(j)) &&
             text[j] != '[' && text[j] != '<') {
        ++j;
      }
      if (j < n && text[j] == close && j > i + 1) {
        out.push_back({text.substr(i, j + 1 - i), {i, j + 1}});
        i = j + 1;
        continue;
      }
    }
    if (!is_word_byte(byte(i))) {
      out.push_back({text.substr(i, 1), {i, i + 1}});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n) {
      if (is_word_byte(byte(j))) {
        ++j;
      } else if ((text[j] == '-' || text[j] == '\'' || text[j] == '.') &&
                 j + 1 < n && is_word_byte(byte(j + 1)) &&
                 std::isalnum(byte(j - 1))) {
        ++j;
      } else {
        break;
      }
    }
    out.push_back({text.substr(i, j - i), {i, j}});
    i = j;
  }
  return out;
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSeq seq;
  seq.text = std::string(text);
  for (const auto& w : split_words(text)) {
    seq.tokens.push_back(vocab.id(w.word));
    seq.char_spans.push_back(w.chars);
  }
  return seq;
}

std::string detokenize(std::span<const TokenId> tokens,
                       const Vocabulary& vocab) {
  static constexpr std::string_view kNoSpaceBefore = ".,!?;:)]";
  std::string out;
  bool glue_next = false;
  for (auto id : tokens) {
    const auto& tok = vocab.token(id);
    bool glue = glue_next || (tok.size() == 1 &&
                              kNoSpaceBefore.find(tok[0]) != std::string::npos);
    if (!out.empty() && !glue) out += ' ';
    out += tok;
    glue_next = tok == "(";
  }
  return out;
}

PromptText render_mpp(const MppTemplate& tmpl, std::string_view user,
                      std::span<const std::string> history) {
  tmpl.validate();
  if (history.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot render an MPP for user '" + std::string(user) +
                    "' with an empty history");
  }
  PromptText out;
  std::string_view pattern = tmpl.pattern;
  std::size_t pos = 0;
  while (pos < pattern.size()) {
    if (pattern.substr(pos, 6) == "{user}") {
      out.text += user_token(user);
      pos += 6;
    } else if (pattern.substr(pos, 9) == "{history}") {
      for (std::size_t i = 0; i < history.size(); ++i) {
        if (i > 0) out.text += tmpl.history_separator;
        std::size_t begin = out.text.size();
        out.text += item_token(history[i]);
        out.item_spans.push_back({history[i], {begin, out.text.size()}});
      }
      pos += 9;
    } else if (pattern.substr(pos, 6) == "{mask}") {
      std::size_t begin = out.text.size();
      out.text += special::kMask;
      out.mask_span = Span{begin, out.text.size()};
      pos += 6;
    } else {
      out.text += pattern[pos++];
    }
  }
  return out;
}

PromptText render_triple(const RelationTemplate& tmpl,
                         std::string_view head_name,
                         std::string_view tail_name) {
  if (head_name.empty() || tail_name.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "triple prompt needs non-empty head and tail names");
  }
  tmpl.validate();
  PromptText out;
  std::string_view pattern = tmpl.pattern;
  std::size_t pos = 0;
  while (pos < pattern.size()) {
    auto rest = pattern.substr(pos, 3);
    if (rest == "[X]") {
      out.text += head_name;
      pos += 3;
    } else if (rest == "[Y]") {
      out.text += tail_name;
      pos += 3;
    } else {
      out.text += pattern[pos++];
    }
  }
  return out;
}

TokenSeq fuse_prompt(const TokenSeq& mpp, const TokenSeq& kp,
                     const Vocabulary& vocab, std::size_t max_input_tokens) {
  const std::size_t required = mpp.size() + kp.size() + 3;
  if (required > max_input_tokens) {
    throw BudgetError(required, max_input_tokens);
  }
  TokenSeq out;
  out.tokens.reserve(required);
  out.char_spans.reserve(required);
  auto add_spe = [&] {
    if (!out.text.empty()) out.text += ' ';
    std::size_t begin = out.text.size();
    out.text += special::kSpe;
    out.tokens.push_back(vocab.spe());
    out.char_spans.push_back({begin, out.text.size()});
  };
  auto add_seq = [&](const TokenSeq& seq) {
    if (seq.tokens.empty()) return;
    out.text += ' ';
    std::size_t offset = out.text.size();
    out.text += seq.text;
    out.tokens.insert(out.tokens.end(), seq.tokens.begin(), seq.tokens.end());
    for (auto s : seq.char_spans) {
      out.char_spans.push_back({s.begin + offset, s.end + offset});
    }
  };
  add_spe();
  add_seq(mpp);
  add_spe();
  add_seq(kp);
  add_spe();
  return out;
}

std::vector<MppTemplate> load_mpp_templates(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!doc.is_array()) {
    throw ParseError(path.string(), 0, "MPP templates must be a JSON array");
  }
  std::vector<MppTemplate> out;
  for (const auto& entry : doc) {
    MppTemplate t;
    t.id = entry.at("id").get<int>();
    t.pattern = entry.at("pattern").get<std::string>();
    if (entry.contains("separator")) {
      t.history_separator = entry["separator"].get<std::string>();
    }
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

void save_mpp_templates(const std::filesystem::path& path,
                        std::span<const MppTemplate> templates) {
  json doc = json::array();
  for (const auto& t : templates) {
    json entry = {{"id", t.id}, {"pattern", t.pattern}};
    if (t.history_separator != ", ") entry["separator"] = t.history_separator;
    doc.push_back(std::move(entry));
  }
  auto out = detail::open_output(path);
  out << doc.dump(2) << '\n';
}

std::map<std::string, RelationTemplate> load_relation_templates(
    const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!doc.is_object()) {
    throw ParseError(path.string(), 0,
                     "relation templates must be a JSON object");
  }
  std::map<std::string, RelationTemplate> out;
  for (const auto& [rel, pattern] : doc.items()) {
    RelationTemplate t{rel, pattern.get<std::string>()};
    t.validate();
    out.emplace(rel, std::move(t));
  }
  return out;
}

void save_relation_templates(
    const std::filesystem::path& path,
    const std::map<std::string, RelationTemplate>& templates) {
  json doc = json::object();
  for (const auto& [rel, t] : templates) doc[rel] = t.pattern;
  auto out = detail::open_output(path);
  out << doc.dump(2) << '\n';
}

}  // namespace kprompt
