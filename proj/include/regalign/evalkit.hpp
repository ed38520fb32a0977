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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regalign/box.hpp"
#include "regalign/scenes.hpp"

namespace regalign {

enum class EvalMode { novel, base, generalized };
const char* to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& name);

enum class Interpolation { all_point, coco101 };
const char* to_string(Interpolation interp);
Interpolation parse_interpolation(const std::string& name);

/// Vocabulary ids scored in `mode`, ascending.
std::vector<std::size_t> eval_class_ids(const Dataset& dataset, EvalMode mode);

/// One scored detection against the dataset vocabulary.
struct Detection {
  std::size_t scene_id = 0;
  Box box;
  std::size_t category_id = 0;  // vocabulary id
  double score = 0.0;
  std::string config_digest;
  std::string dataset_digest;
};

/// Greedy matching for one image and one category. `dets` must already be
/// in descending score order. Each detection takes the unmatched GT of
/// highest IoU when that IoU >= iou_thr (true positive), else is a false
/// positive; each GT is used at most once.
std::vector<bool> match_detections(const std::vector<Box>& dets, const std::vector<Box>& gts, double iou_thr);

/// Area under the precision envelope from cumulative TP/FP flags (score
/// order). Throws NoGroundTruth when n_gt == 0.
double average_precision(const std::vector<bool>& tp, std::size_t n_gt,
                         Interpolation interp = Interpolation::all_point);

struct CategoryMetrics {
  std::string name;
  std::size_t n_gt = 0;
  std::size_t n_det = 0;
  bool novel = false;
  std::optional<double> ap50;                 // absent when n_gt == 0
  std::map<std::string, double> ap_by_iou;  // sweep thresholds, keyed "0.50"
};

struct MetricsReport {
  EvalMode mode = EvalMode::generalized;
  std::map<std::string, CategoryMetrics> per_category;
  std::optional<double> novel_ap50, base_ap50, all_ap50;
  std::optional<double> map_sweep;  // mean over categories and sweep thresholds
  std::string dataset_digest;
};

struct EvalOptions {
  std::vector<double> iou_sweep;  // extra thresholds beyond 0.5; empty skips mAP
  Interpolation interpolation = Interpolation::all_point;
};

/// Scores `detections` on the evaluation split. Every detection category
/// must belong to the mode's class list (UnknownCategory otherwise).
MetricsReport evaluate(const std::vector<Detection>& detections, const Dataset& dataset, EvalMode mode,
                       const EvalOptions& options = {});

/// {per_category, novel_ap50, base_ap50, all_ap50, mode, dataset_digest};
/// aggregates with no scored category are null.
std::string metrics_json(const MetricsReport& report);

/// Reads a detection JSON-lines dump, resolving category names against the
/// vocabulary. Throws UnknownCategory or CorruptFile.
std::vector<Detection> read_detections(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace regalign
