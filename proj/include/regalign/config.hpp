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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "regalign/alignment.hpp"
#include "regalign/detect.hpp"
#include "regalign/encoders.hpp"
#include "regalign/evalkit.hpp"
#include "regalign/scenes.hpp"
#include "regalign/text_encoder.hpp"
#include "regalign/train.hpp"

namespace regalign {

struct PoolConfig {
  std::size_t min_freq = 5;
  std::vector<std::string> templates{"a photo of a {}"};
  /// Lexicon file; empty uses the builtin color and shape words.
  std::string lexicon;
};

struct DetectConfig {
  ProposalSource proposals = ProposalSource::oracle_rpn;
  std::size_t regions_per_image = 32;
  double jitter_sigma = 0.1;
  ZeroShotOptions options;
};

struct HeadConfig {
  double background_weight = 0.2;
  double gamma = 0.5;
};

/// Everything one pipeline run needs. Serialized as nested JSON; the digest
/// of the canonical dump identifies the run in every artifact.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Temperature shared by pseudo-labeling, every loss and the detector head.
  double tau = 0.01;
  std::string out = "runs/default";
  DatasetConfig data;
  PoolConfig pool;
  TextEncoderSpec text;
  EncoderConfig model;
  TrainConfig pretrain_image;
  TrainConfig pretrain_region;
  FinetuneConfig finetune;
  HeadConfig head;
  DetectConfig detect;
  EvalOptions eval;
  std::size_t log_every = 1;

  RunConfig();
};

/// Default configuration as JSON; the schema for file and override keys.
std::string default_config_json();

/// defaults <- file (when non-empty) <- overrides ("a.b=value", value parsed
/// as JSON and otherwise taken as a string). Unknown keys and invalid values
/// throw BadConfig naming the key path.
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});

/// Canonical JSON of a config (sorted keys, compact).
std::string config_json(const RunConfig& config);
/// FNV-1a hex digest of config_json.
std::string config_digest(const RunConfig& config);

}  // namespace regalign
