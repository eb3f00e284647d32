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

#include "kprompt/maskgen.hpp"

#include <bit>

#include "kprompt/error.hpp"

namespace kprompt {

MaskMatrix::MaskMatrix(std::size_t size, bool visible)
    : size_(size), bits_((size * size + 63) / 64, visible ? ~0ULL : 0ULL) {
  if (visible && (size * size) % 64 != 0) {
    bits_.back() &= (1ULL << ((size * size) % 64)) - 1;
  }
}

void MaskMatrix::set(std::size_t i, std::size_t j, bool v) {
  std::size_t bit = i * size_ + j;
  if (v) {
    bits_[bit >> 6] |= 1ULL << (bit & 63);
  } else {
    bits_[bit >> 6] &= ~(1ULL << (bit & 63));
  }
}

std::size_t MaskMatrix::visible_count() const {
  std::size_t n = 0;
  for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::uint8_t> MaskMatrix::to_bytes() const {
  const std::size_t nbits = size_ * size_;
  std::vector<std::uint8_t> out(4 + (nbits + 7) / 8, 0);
  auto n = static_cast<std::uint32_t>(size_);
  for (int b = 0; b < 4; ++b) out[b] = static_cast<std::uint8_t>(n >> (8 * b));
  for (std::size_t k = 0; k < (nbits + 7) / 8; ++k) {
    out[4 + k] = static_cast<std::uint8_t>(bits_[k / 8] >> (8 * (k % 8)));
  }
  return out;
}

MaskMatrix MaskMatrix::from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw Error(ErrorCode::kInvalidArgument, "mask bytes lack a size header");
  }
  std::uint32_t n = 0;
  for (int b = 0; b < 4; ++b) n |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  const std::size_t nbits = static_cast<std::size_t>(n) * n;
  if (bytes.size() != 4 + (nbits + 7) / 8) {
    throw Error(ErrorCode::kInvalidArgument,
                "mask payload has " + std::to_string(bytes.size() - 4) +
                    " bytes, expected " + std::to_string((nbits + 7) / 8));
  }
  MaskMatrix m(n);
  for (std::size_t k = 0; k < (nbits + 7) / 8; ++k) {
    m.bits_[k / 8] |= static_cast<std::uint64_t>(bytes[4 + k]) << (8 * (k % 8));
  }
  return m;
}

std::string MaskMatrix::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  auto bytes = to_bytes();
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 15];
  }
  return out;
}

MaskMatrix MaskMatrix::from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "odd-length mask hex string");
  }
  auto nibble = [](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw Error(ErrorCode::kInvalidArgument, "invalid hex digit in mask");
  };
  std::vector<std::uint8_t> bytes(hex.size() / 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 |
                                         nibble(hex[2 * i + 1]));
  }
  return from_bytes(bytes);
}

bool node_visible(const KnowledgeTree& tree, int a, int b) {
  const auto& na = tree.node(a);
  const auto& nb = tree.node(b);
  if (a == b) return true;
  if (na.parent == b || nb.parent == a) return true;
  return na.parent && nb.parent && *na.parent == *nb.parent;
}

MaskMatrix build_mask(const KnowledgeTree& tree, std::size_t length) {
  const auto owner = tree.token_owners(length);
  const std::size_t n_nodes = tree.nodes.size();
  std::vector<std::uint8_t> node_vis(n_nodes * n_nodes);
  for (std::size_t a = 0; a < n_nodes; ++a) {
    for (std::size_t b = 0; b < n_nodes; ++b) {
      node_vis[a * n_nodes + b] =
          node_visible(tree, static_cast<int>(a), static_cast<int>(b));
    }
  }
  MaskMatrix m(length);
  for (std::size_t i = 0; i < length; ++i) {
    const auto row = static_cast<std::size_t>(owner[i]) * n_nodes;
    for (std::size_t j = 0; j < length; ++j) {
      if (node_vis[row + static_cast<std::size_t>(owner[j])]) m.set(i, j, true);
    }
  }
  return m;
}

}  // namespace kprompt
