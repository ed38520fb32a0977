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

#include "regalign/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "regalign/error.hpp"

namespace regalign {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon " + path.string());
  Lexicon lex;
  std::set<std::string>* section = nullptr;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line == "[adjectives]") {
      section = &lex.adjectives;
    } else if (line == "[nouns]") {
      section = &lex.nouns;
    } else if (section == nullptr) {
      throw CorruptFile(path.string() + ":" + std::to_string(lineno) + ": word outside a section");
    } else {
      section->insert(lower(line));
    }
  }
  if (lex.empty()) throw CorruptFile(path.string() + ": no nouns");
  return lex;
}

void save_lexicon(const Lexicon& lex, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write lexicon " + path.string());
  out << "[adjectives]\n";
  for (const auto& w : lex.adjectives) out << w << '\n';
  out << "[nouns]\n";
  for (const auto& w : lex.nouns) out << w << '\n';
}

DenseArray ConceptPool::embedding(std::size_t j) const {
  const auto r = embeddings.row(j);
  return DenseArray::vector(std::vector<double>(r.begin(), r.end()));
}

std::size_t ConceptPool::find(std::string_view text) const {
  for (std::size_t i = 0; i < concepts.size(); ++i)
    if (concepts[i].text == text) return i;
  return concepts.size();
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::string> extract_concepts(std::string_view caption, const Lexicon& lexicon) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : caption) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));

  std::vector<std::string> out;
  std::vector<std::string> pending;  // adjectives awaiting a noun
  for (auto& tok : tokens) {
    if (lexicon.nouns.contains(tok)) {
      std::string chunk;
      for (const auto& a : pending) chunk += a + ' ';
      chunk += tok;
      out.push_back(std::move(chunk));
      pending.clear();
    } else if (lexicon.adjectives.contains(tok)) {
      pending.push_back(tok);
    } else {
      pending.clear();
    }
  }
  return out;
}

std::string fill_prompt(std::string_view concept_text, std::string_view templ) {
  const auto pos = templ.find("{}");
  if (pos == std::string_view::npos) throw BadTemplate("no \"{}\" placeholder in \"" + std::string(templ) + "\"");
  if (templ.find("{}", pos + 2) != std::string_view::npos)
    throw BadTemplate("multiple placeholders in \"" + std::string(templ) + "\"");
  std::string out(templ.substr(0, pos));
  out += concept_text;
  out += templ.substr(pos + 2);
  return out;
}

DenseArray embed_concepts(const std::vector<std::string>& concepts, const std::vector<std::string>& templates,
                          const TextEncoder& encoder) {
  if (templates.empty()) throw BadTemplate("no templates");
  if (concepts.empty()) throw EmptyPool("no concepts to embed");
  const std::size_t d = encoder.dim();
  DenseArray emb({concepts.size(), d});
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    DenseArray acc({d});
    for (const auto& t : templates) axpy(1.0, encoder.encode(fill_prompt(concepts[i], t)), acc);
    const DenseArray unit = l2_normalize(acc);
    std::copy(unit.values().begin(), unit.values().end(), emb.row(i).begin());
  }
  return emb;
}

ConceptPool build_concept_pool(const std::vector<std::string>& captions, const Lexicon& lexicon,
                               std::size_t min_freq, const std::vector<std::string>& templates,
                               const TextEncoder& encoder) {
  if (min_freq < 1) throw BadConfig("min_freq must be >= 1");
  if (lexicon.empty()) throw BadConfig("empty lexicon");
  for (const auto& t : templates) (void)fill_prompt("x", t);

  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions)
    for (auto& concept_text : extract_concepts(c, lexicon)) ++counts[concept_text];

  std::vector<Concept> kept;
  for (const auto& [text, freq] : counts)
    if (freq >= min_freq) kept.push_back({text, freq, 0});
  if (kept.empty()) throw EmptyPool("no concept reaches frequency " + std::to_string(min_freq));

  std::stable_sort(kept.begin(), kept.end(), [](const Concept& a, const Concept& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.text < b.text;
  });
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    kept[i].id = i;
    texts.push_back(kept[i].text);
  }

  ConceptPool pool;
  pool.embeddings = embed_concepts(texts, templates, encoder);
  pool.concepts = std::move(kept);
  pool.templates = templates;
  return pool;
}

}  // namespace regalign
