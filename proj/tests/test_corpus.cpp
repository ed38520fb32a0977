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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "regalign/corpus.hpp"
#include "regalign/error.hpp"
#include "regalign/text_encoder.hpp"
#include "regalign/util.hpp"

using namespace regalign;

namespace {

Lexicon shapes_lexicon() {
  Lexicon lex;
  lex.adjectives = {"red", "blue", "green"};
  lex.nouns = {"square", "circle", "kite"};
  return lex;
}

}  // namespace

TEST_CASE("extract_concepts follows the adjective-noun chunk rule") {
  const auto lex = shapes_lexicon();
  CHECK(extract_concepts("a photo of a red square and a blue circle", lex) ==
        std::vector<std::string>{"red square", "blue circle"});
  CHECK(extract_concepts("", lex).empty());
  CHECK(extract_concepts("red red square", lex) == std::vector<std::string>{"red red square"});
  CHECK(extract_concepts("A Kite, a RED circle.", lex) == std::vector<std::string>{"kite", "red circle"});
  // An unknown word breaks a pending chunk.
  CHECK(extract_concepts("red big square", lex) == std::vector<std::string>{"square"});
  CHECK(extract_concepts("red", lex).empty());
}

TEST_CASE("extract_concepts is stable under whitespace normalization") {
  const auto lex = shapes_lexicon();
  Rng rng(3);
  const std::vector<std::string> words{"a", "red", "square", "and", "blue", "circle", "kite", "of"};
  for (int t = 0; t < 200; ++t) {
    std::string s;
    const auto n = rng.below(10);
    for (std::uint64_t i = 0; i < n; ++i) {
      s += words[rng.below(words.size())];
      s += std::string(1 + rng.below(3), rng.below(2) ? ' ' : '\t');
    }
    CHECK(extract_concepts(s, lex) == extract_concepts(normalize_whitespace(s), lex));
  }
}

TEST_CASE("fill_prompt") {
  CHECK(fill_prompt("kite", "a photo of a {}") == "a photo of a kite");
  CHECK(fill_prompt("red square", "{}") == "red square");
  CHECK_THROWS_AS(fill_prompt("x", "no placeholder"), BadTemplate);
  CHECK_THROWS_AS(fill_prompt("x", "{} and {}"), BadTemplate);
}

TEST_CASE("build_concept_pool frequency filter and ordering") {
  const auto lex = shapes_lexicon();
  const TextEncoder enc;
  const std::vector<std::string> captions{"a red square", "a red square", "a blue circle"};
  const auto pool = build_concept_pool(captions, lex, 2, {"a photo of a {}"}, enc);
  REQUIRE(pool.size() == 1);
  CHECK(pool.concepts[0].text == "red square");
  CHECK(pool.concepts[0].frequency == 2);

  const auto all = build_concept_pool(captions, lex, 1, {"a photo of a {}"}, enc);
  REQUIRE(all.size() == 2);
  CHECK(all.concepts[0].text == "red square");
  CHECK(all.concepts[1].text == "blue circle");
  CHECK(all.embeddings.extent(0) == 2);
  CHECK(all.embeddings.extent(1) == enc.dim());

  CHECK_THROWS_AS(build_concept_pool({}, lex, 1, {"a photo of a {}"}, enc), EmptyPool);
  CHECK_THROWS_AS(build_concept_pool(captions, lex, 0, {"a photo of a {}"}, enc), BadConfig);
}

TEST_CASE("build_concept_pool ties break lexicographically and rows are unit norm") {
  const auto lex = shapes_lexicon();
  const TextEncoder enc;
  const std::vector<std::string> captions{"a kite", "a blue circle", "a red square", "a green kite"};
  const auto pool = build_concept_pool(captions, lex, 1, {"a photo of a {}", "a {} in the picture"}, enc);
  std::vector<std::string> texts;
  for (const auto& c : pool.concepts) texts.push_back(c.text);
  CHECK(texts == std::vector<std::string>{"blue circle", "green kite", "kite", "red square"});
  for (std::size_t j = 0; j < pool.size(); ++j) {
    CHECK(std::abs(l2_norm(pool.embeddings.row(j)) - 1.0) < 1e-9);
    CHECK(pool.concepts[j].id == j);
  }
  CHECK(pool.find("kite") == 2);
  CHECK(pool.find("boat") == pool.size());
}

TEST_CASE("raising min_freq never adds a concept") {
  const auto lex = shapes_lexicon();
  const TextEncoder enc;
  Rng rng(8);
  const std::vector<std::string> phrases{"red square", "blue circle", "green kite", "red kite", "blue square"};
  std::vector<std::string> captions;
  for (int i = 0; i < 60; ++i) captions.push_back("a " + phrases[rng.below(phrases.size())]);
  std::set<std::string> previous;
  for (std::size_t f = 1; f <= 40; ++f) {
    std::set<std::string> current;
    try {
      for (const auto& c : build_concept_pool(captions, lex, f, {"{}"}, enc).concepts) current.insert(c.text);
    } catch (const EmptyPool&) {
    }
    if (f > 1)
      for (const auto& c : current) CHECK(previous.count(c) == 1);
    previous = current;
  }
}

TEST_CASE("lexicon file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "regalign_lexicon_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "lexicon.txt";
  {
    std::ofstream out(path);
    out << "# colors\n[adjectives]\nRed\n\nblue\n[nouns]\nsquare\n";
  }
  const auto lex = load_lexicon(path);
  CHECK(lex.adjectives == std::set<std::string>{"blue", "red"});
  CHECK(lex.nouns == std::set<std::string>{"square"});
  save_lexicon(lex, dir / "copy.txt");
  const auto again = load_lexicon(dir / "copy.txt");
  CHECK(again.adjectives == lex.adjectives);
  CHECK(again.nouns == lex.nouns);
  CHECK_THROWS_AS(load_lexicon(dir / "missing.txt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("text encoder") {
  const TextEncoder enc;
  CHECK(enc.encode("a") == enc.encode("a"));
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::string s;
    const auto n = 1 + rng.below(20);
    for (std::uint64_t i = 0; i < n; ++i) s += char('a' + rng.below(26));
    CHECK(std::abs(l2_norm(enc.encode(s).values()) - 1.0) < 1e-12);
  }
  const auto a = enc.encode("red square");
  CHECK(cosine_similarity(a, enc.encode("red squarf")) > cosine_similarity(a, enc.encode("blue circle")));
  CHECK(enc.encode("Red Square") == a);
  CHECK_THROWS_AS(enc.encode(""), BadConfig);
}
