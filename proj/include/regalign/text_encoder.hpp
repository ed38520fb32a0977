// Copyright 2026 The RegionAlign Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "regalign/numerics.hpp"

namespace regalign {

struct TextEncoderSpec {
  std::size_t n_buckets = 512;
  std::size_t embed_dim = 64;
  std::uint64_t seed = 7;
};

/// Frozen language encoder: boundary-padded character trigram counts,
/// hashed into buckets, projected by a fixed seeded matrix, normalized.
///
/// The projection is generated once in the constructor and there is no
/// mutating member; `digest()` lets callers verify that nothing changed.
class TextEncoder {
 public:
  explicit TextEncoder(const TextEncoderSpec& spec = {});

  /// Unit-norm embedding of `text` (lowercased before hashing).
  DenseArray encode(std::string_view text) const;

  /// Raw bucket counts; exposed for tests.
  DenseArray trigram_counts(std::string_view text) const;

  const TextEncoderSpec& spec() const noexcept { return spec_; }
  std::size_t dim() const noexcept { return spec_.embed_dim; }
  std::uint64_t digest() const;

 private:
  const TextEncoderSpec spec_;
  const DenseArray projection_;  // n_buckets x embed_dim
};

}  // namespace regalign
