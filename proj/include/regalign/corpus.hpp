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
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "regalign/numerics.hpp"
#include "regalign/text_encoder.hpp"

namespace regalign {

/// Word lists driving the concept chunker.
struct Lexicon {
  std::set<std::string> adjectives;
  std::set<std::string> nouns;

  bool empty() const noexcept { return nouns.empty(); }
};

/// Reads the plain-text lexicon format: one word per line under
/// "[adjectives]" and "[nouns]" section headers; blank lines and lines
/// starting with '#' are skipped.
Lexicon load_lexicon(const std::filesystem::path& path);
void save_lexicon(const Lexicon& lex, const std::filesystem::path& path);

struct Concept {
  std::string text;
  std::size_t frequency = 0;
  std::size_t id = 0;

  bool operator==(const Concept&) const = default;
};

/// Ordered concept list plus one unit-norm embedding row per concept.
struct ConceptPool {
  std::vector<Concept> concepts;
  DenseArray embeddings;  // C x d
  std::vector<std::string> templates;

  std::size_t size() const noexcept { return concepts.size(); }
  /// Row `j` as a standalone vector.
  DenseArray embedding(std::size_t j) const;
  /// Index of `text` or size() when absent.
  std::size_t find(std::string_view text) const;
};

/// Lowercases and collapses runs of whitespace into single spaces.
std::string normalize_whitespace(std::string_view s);

/// Maximal `[adjective]* noun` chunks over the lexicon, left to right.
/// Tokens are runs of letters; any token outside the lexicon breaks a chunk.
std::vector<std::string> extract_concepts(std::string_view caption, const Lexicon& lexicon);

/// Replaces the single "{}" placeholder in `templ` with `concept_text`.
std::string fill_prompt(std::string_view concept_text, std::string_view templ);

/// Counts chunked concepts over the corpus, keeps those with frequency >=
/// min_freq, orders them by descending frequency then lexicographically,
/// and embeds each through every template (averaged, renormalized).
ConceptPool build_concept_pool(const std::vector<std::string>& captions, const Lexicon& lexicon,
                               std::size_t min_freq, const std::vector<std::string>& templates,
                               const TextEncoder& encoder);

/// Embeds an explicit concept list (used for evaluation class names).
DenseArray embed_concepts(const std::vector<std::string>& concepts, const std::vector<std::string>& templates,
                          const TextEncoder& encoder);

}  // namespace regalign
