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

#include <filesystem>
#include <string>
#include <vector>

#include "regalign/config.hpp"
#include "regalign/corpus.hpp"
#include "regalign/detect.hpp"
#include "regalign/evalkit.hpp"
#include "regalign/train.hpp"

namespace regalign {

// Stage functions shared by the command line tool and the experiment
// harness. Each is a pure function of the config and its inputs.

Dataset make_dataset(const RunConfig& config);
TextEncoder make_text_encoder(const RunConfig& config);
/// The configured lexicon file, or every builtin color and shape word.
Lexicon make_lexicon(const RunConfig& config);
/// Concept pool mined from the training captions.
ConceptPool make_concept_pool(const RunConfig& config, const Dataset& dataset, const TextEncoder& text);

Checkpoint run_image_pretraining(const RunConfig& config, const Dataset& dataset, const TextEncoder& text,
                                 const TrainLogger& log = {});
Checkpoint run_region_pretraining(const RunConfig& config, const Dataset& dataset, const Checkpoint& teacher,
                                  const ConceptPool& pool, const TextEncoder& text, const TrainLogger& log = {});

/// Head over the dataset categories scored in `mode`.
DetectorHead make_eval_head(const RunConfig& config, const Dataset& dataset, const TextEncoder& text, EvalMode mode);
/// Head over the base categories, used for fine-tuning.
DetectorHead make_base_head(const RunConfig& config, const Dataset& dataset, const TextEncoder& text);

Checkpoint run_finetune(const RunConfig& config, const Dataset& dataset, const Checkpoint& student,
                        const TextEncoder& text, const TrainLogger& log = {});

/// Zero-shot detections on every evaluation scene, in scene order, with
/// category ids mapped to vocabulary ids.
std::vector<Detection> detect_eval_split(const RunConfig& config, const Dataset& dataset,
                                         const VisualEncoderParams& params, const DetectorHead& head);

MetricsReport run_zero_shot_eval(const RunConfig& config, const Dataset& dataset, const VisualEncoderParams& params,
                                 const TextEncoder& text, EvalMode mode);

/// concepts.json ({templates, concepts: [{text, frequency}], embedding_dim,
/// config_digest}) plus concepts.bin holding the embedding matrix.
void save_concept_pool(const ConceptPool& pool, const std::filesystem::path& directory, const std::string& digest);
ConceptPool load_concept_pool(const std::filesystem::path& directory);

void write_detection_dump(const std::vector<Detection>& detections, const Vocabulary& vocab,
                          const std::filesystem::path& path);

}  // namespace regalign
