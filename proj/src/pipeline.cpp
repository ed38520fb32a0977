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

#include "regalign/pipeline.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "regalign/error.hpp"
#include "regalign/parallel.hpp"
#include "regalign/util.hpp"

namespace regalign {

using nlohmann::json;

Dataset make_dataset(const RunConfig& config) { return generate_dataset(config.data); }

TextEncoder make_text_encoder(const RunConfig& config) { return TextEncoder(config.text); }

Lexicon make_lexicon(const RunConfig& config) {
  if (!config.pool.lexicon.empty()) return load_lexicon(config.pool.lexicon);
  Lexicon lex;
  for (const auto& c : builtin_colors()) lex.adjectives.insert(c.name);
  for (const char* s : {"circle", "square", "triangle", "cross", "bar"}) lex.nouns.insert(s);
  return lex;
}

ConceptPool make_concept_pool(const RunConfig& config, const Dataset& dataset, const TextEncoder& text) {
  std::vector<std::string> captions;
  for (const Scene* s : dataset.split(Split::train)) captions.push_back(s->caption);
  return build_concept_pool(captions, make_lexicon(config), config.pool.min_freq, config.pool.templates, text);
}

Checkpoint run_image_pretraining(const RunConfig& config, const Dataset& dataset, const TextEncoder& text,
                                 const TrainLogger& log) {
  return pretrain_image_level(config.pretrain_image, config.model, dataset, text, config_digest(config), log);
}

Checkpoint run_region_pretraining(const RunConfig& config, const Dataset& dataset, const Checkpoint& teacher,
                                  const ConceptPool& pool, const TextEncoder& text, const TrainLogger& log) {
  return pretrain_region_level(config.pretrain_region, dataset, teacher, pool, text, config_digest(config), log);
}

DetectorHead make_eval_head(const RunConfig& config, const Dataset& dataset, const TextEncoder& text, EvalMode mode) {
  return make_head(dataset.vocabulary, eval_class_ids(dataset, mode), text, config.pool.templates, config.tau,
                   config.head.background_weight, config.head.gamma);
}

DetectorHead make_base_head(const RunConfig& config, const Dataset& dataset, const TextEncoder& text) {
  return make_eval_head(config, dataset, text, EvalMode::base);
}

Checkpoint run_finetune(const RunConfig& config, const Dataset& dataset, const Checkpoint& student,
                        const TextEncoder& text, const TrainLogger& log) {
  return finetune_detector(config.finetune, dataset, student, make_base_head(config, dataset, text),
                           config_digest(config), log);
}

std::vector<Detection> detect_eval_split(const RunConfig& config, const Dataset& dataset,
                                         const VisualEncoderParams& params, const DetectorHead& head) {
  const auto scenes = dataset.split(Split::eval);
  const std::string cdigest = config_digest(config);
  const std::string ddigest = dataset.digest();
  std::vector<std::vector<DetectionResult>> per_scene(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    const Scene& s = *scenes[i];
    const auto proposals =
        make_proposals(s, config.detect.proposals, config.detect.regions_per_image, config.detect.jitter_sigma,
                       config.pretrain_region.random_proposals, mix_seed(mix_seed(config.seed, 0xde7ec7), s.id));
    const DenseArray fmap = forward_image(params, s.image, false).fmap;
    per_scene[i] = zero_shot_detect(params, fmap, s.id, proposals, head, config.detect.options);
  });
  std::vector<Detection> out;
  for (const auto& dets : per_scene)
    for (const auto& d : dets)
      out.push_back({d.scene_id, d.box, head.class_ids.at(d.category_id), d.score, cdigest, ddigest});
  return out;
}

MetricsReport run_zero_shot_eval(const RunConfig& config, const Dataset& dataset, const VisualEncoderParams& params,
                                 const TextEncoder& text, EvalMode mode) {
  const DetectorHead head = make_eval_head(config, dataset, text, mode);
  return evaluate(detect_eval_split(config, dataset, params, head), dataset, mode, config.eval);
}

void save_concept_pool(const ConceptPool& pool, const std::filesystem::path& directory, const std::string& digest) {
  std::filesystem::create_directories(directory);
  json concepts = json::array();
  for (const auto& c : pool.concepts) concepts.push_back({{"text", c.text}, {"frequency", c.frequency}});
  const json meta = {{"template", pool.templates.empty() ? "" : pool.templates.front()},
                     {"templates", pool.templates},
                     {"concepts", concepts},
                     {"embedding_dim", pool.embeddings.rank() == 2 ? pool.embeddings.extent(1) : 0},
                     {"config_digest", digest}};
  {
    std::ofstream out(directory / "concepts.json");
    if (!out) throw IoError("cannot write " + (directory / "concepts.json").string());
    out << meta.dump(2) << '\n';
  }
  TensorFile file;
  file.metadata = json{{"kind", "concept-embeddings"}, {"config_digest", digest}}.dump();
  file.arrays.push_back(pool.embeddings);
  write_tensor_file(file, directory / "concepts.bin");
}

ConceptPool load_concept_pool(const std::filesystem::path& directory) {
  const auto json_path = directory / "concepts.json";
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot read " + json_path.string());
  ConceptPool pool;
  std::size_t dim = 0;
  try {
    const json meta = json::parse(in);
    pool.templates = meta.at("templates").get<std::vector<std::string>>();
    for (const auto& c : meta.at("concepts"))
      pool.concepts.push_back({c.at("text").get<std::string>(), c.at("frequency").get<std::size_t>(),
                               pool.concepts.size()});
    dim = meta.at("embedding_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw CorruptFile(json_path.string() + ": " + e.what());
  }
  const TensorFile file = read_tensor_file(directory / "concepts.bin");
  if (file.arrays.size() != 1 || file.arrays[0].rank() != 2 || file.arrays[0].extent(0) != pool.concepts.size() ||
      file.arrays[0].extent(1) != dim)
    throw CorruptCheckpoint((directory / "concepts.bin").string() + ": embedding shape mismatch");
  pool.embeddings = file.arrays[0];
  if (pool.concepts.empty()) throw EmptyPool("concept pool is empty");
  return pool;
}

void write_detection_dump(const std::vector<Detection>& detections, const Vocabulary& vocab,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : detections) {
    const json j = {{"scene_id", d.scene_id},
                    {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                    {"category", vocab.name(d.category_id)},
                    {"score", d.score},
                    {"config_digest", d.config_digest},
                    {"dataset_digest", d.dataset_digest}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace regalign
