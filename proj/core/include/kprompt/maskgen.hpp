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
#include <span>
#include <string>
#include <vector>

#include "kprompt/ktree.hpp"

namespace kprompt {

// Additive value used for invisible pairs. Large enough that exp() of a
// shifted score underflows to exactly zero in float and double.
inline constexpr double kMaskSentinel = -1e9;

// Square token-visibility matrix stored as row-major packed bits.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(std::size_t size, bool visible = false);

  static MaskMatrix all_visible(std::size_t size) { return MaskMatrix(size, true); }

  std::size_t size() const { return size_; }
  bool visible(std::size_t i, std::size_t j) const {
    std::size_t bit = i * size_ + j;
    return (bits_[bit >> 6] >> (bit & 63)) & 1u;
  }
  void set(std::size_t i, std::size_t j, bool v);
  // 0 for visible pairs, kMaskSentinel otherwise.
  double additive(std::size_t i, std::size_t j) const {
    return visible(i, j) ? 0.0 : kMaskSentinel;
  }
  std::size_t visible_count() const;

  // Little-endian u32 size header followed by ceil(size^2 / 8) bytes; bit k
  // of the flattened matrix is bit (k % 8) of byte k / 8.
  std::vector<std::uint8_t> to_bytes() const;
  static MaskMatrix from_bytes(std::span<const std::uint8_t> bytes);
  std::string to_hex() const;
  static MaskMatrix from_hex(const std::string& hex);

  bool operator==(const MaskMatrix&) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> bits_;
};

// Same node, parent/child, or siblings under a shared parent.
bool node_visible(const KnowledgeTree& tree, int a, int b);

MaskMatrix build_mask(const KnowledgeTree& tree, std::size_t length);

}  // namespace kprompt
