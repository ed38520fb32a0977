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

#include "regalign/text_encoder.hpp"

#include <cassert>
#include <cctype>
#include <cmath>
#include <string>

#include "regalign/error.hpp"
#include "regalign/util.hpp"

namespace regalign {
namespace {

constexpr char kBegin = '\x02';
constexpr char kEnd = '\x03';

DenseArray make_projection(const TextEncoderSpec& spec) {
  if (spec.n_buckets == 0 || spec.embed_dim == 0) throw BadConfig("text encoder needs positive sizes");
  DenseArray p({spec.n_buckets, spec.embed_dim});
  Rng rng(mix_seed(spec.seed, 0x7e47));
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.embed_dim));
  for (auto& x : p.values()) x = rng.normal() * scale;
  return p;
}

}  // namespace

TextEncoder::TextEncoder(const TextEncoderSpec& spec) : spec_(spec), projection_(make_projection(spec)) {}

DenseArray TextEncoder::trigram_counts(std::string_view text) const {
  std::string s;
  s.reserve(text.size() + 2);
  s.push_back(kBegin);
  for (char c : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  s.push_back(kEnd);

  DenseArray counts({spec_.n_buckets});
  // With both markers present a nonempty text always yields a trigram.
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    const auto h = fnv1a(std::string_view(s).substr(i, 3));
    counts[h % spec_.n_buckets] += 1.0;
  }
  return counts;
}

DenseArray TextEncoder::encode(std::string_view text) const {
  if (text.empty()) throw BadConfig("cannot encode empty text");
  const DenseArray counts = trigram_counts(text);
  DenseArray out({spec_.embed_dim});
  for (std::size_t b = 0; b < spec_.n_buckets; ++b) {
    const double c = counts[b];
    if (c == 0.0) continue;
    const auto row = projection_.row(b);
    for (std::size_t k = 0; k < spec_.embed_dim; ++k) out[k] += c * row[k];
  }
  assert(l2_norm(out.values()) > 0.0);
  return l2_normalize(out);
}

std::uint64_t TextEncoder::digest() const {
  const auto* bytes = reinterpret_cast<const unsigned char*>(projection_.data());
  std::uint64_t h = fnv1a(std::span<const unsigned char>(bytes, projection_.size() * sizeof(double)));
  h = mix_seed(h, spec_.n_buckets);
  return mix_seed(h, spec_.seed);
}

}  // namespace regalign
