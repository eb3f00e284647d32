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
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kprompt {

using TokenId = std::int32_t;

// Half-open character or token range.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

namespace special {
inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kMask = "[mask]";
inline constexpr std::string_view kSpe = "[SPE]";
inline constexpr std::string_view kBos = "<s>";
inline constexpr std::size_t kCount = 6;
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kMaskId = 3;
inline constexpr TokenId kSpeId = 4;
inline constexpr TokenId kBosId = 5;
}  // namespace special

std::string user_token(std::string_view user);
std::string item_token(std::string_view item);

// Word-level vocabulary. Ids 0..5 are reserved for the special tokens in the
// order pad, eos, unk, mask, spe, bos.
class Vocabulary {
 public:
  Vocabulary();

  // Appends a token if it is not present yet; returns its id.
  TokenId add(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  // Unknown tokens map to [UNK].
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  TokenId pad() const { return 0; }
  TokenId eos() const { return 1; }
  TokenId unk() const { return 2; }
  TokenId mask() const { return 3; }
  TokenId spe() const { return 4; }
  TokenId bos() const { return 5; }

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct MppTemplate {
  int id = 0;
  std::string pattern;
  std::string history_separator = ", ";

  // Throws kInvalidArgument unless {user}, {history} and {mask} each occur
  // exactly once.
  void validate() const;
};

struct RelationTemplate {
  std::string relation;
  std::string pattern;

  void validate() const;
};

struct ItemSpan {
  std::string item;
  Span chars;
};

struct PromptText {
  std::string text;
  std::vector<ItemSpan> item_spans;
  std::optional<Span> mask_span;
};

struct TokenSeq {
  std::string text;
  std::vector<TokenId> tokens;
  // Character range of every token inside `text`.
  std::vector<Span> char_spans;

  std::size_t size() const { return tokens.size(); }
  // Tokens fully contained in `chars`. Throws if the range splits a token.
  Span token_span(Span chars) const;
};

struct WordPiece {
  std::string_view word;
  Span chars;
};

// Whitespace split, then punctuation characters become their own words.
// Bracketed specials such as [mask] stay atomic and '_' is a word character.
std::vector<WordPiece> split_words(std::string_view text);

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize(std::span<const TokenId> tokens,
                       const Vocabulary& vocab);

PromptText render_mpp(const MppTemplate& tmpl, std::string_view user,
                      std::span<const std::string> history);

PromptText render_triple(const RelationTemplate& tmpl,
                         std::string_view head_name,
                         std::string_view tail_name);

// [SPE] mpp [SPE] kp [SPE]. Throws BudgetError when the result would exceed
// max_input_tokens.
TokenSeq fuse_prompt(const TokenSeq& mpp, const TokenSeq& kp,
                     const Vocabulary& vocab,
                     std::size_t max_input_tokens = 512);

std::vector<MppTemplate> load_mpp_templates(const std::filesystem::path& path);
void save_mpp_templates(const std::filesystem::path& path,
                        std::span<const MppTemplate> templates);
std::map<std::string, RelationTemplate> load_relation_templates(
    const std::filesystem::path& path);
void save_relation_templates(
    const std::filesystem::path& path,
    const std::map<std::string, RelationTemplate>& templates);

}  // namespace kprompt
