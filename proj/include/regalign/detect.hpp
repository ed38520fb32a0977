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
#include <filesystem>
#include <string>
#include <vector>

#include "regalign/alignment.hpp"
#include "regalign/box.hpp"
#include "regalign/encoders.hpp"
#include "regalign/scenes.hpp"
#include "regalign/text_encoder.hpp"
#include "regalign/train.hpp"

namespace regalign {

struct DetectionResult {
  std::size_t scene_id = 0;
  Box box;
  std::size_t category_id = 0;  // index into the head's class list
  double score = 0.0;

  bool operator==(const DetectionResult&) const = default;
};

/// Open-vocabulary classifier: one unit-norm text embedding per class plus
/// an implicit all-zero background embedding. The background logit is the
/// dot product with that zero vector, so it is the constant 0.
struct DetectorHead {
  std::vector<std::size_t> class_ids;  // vocabulary ids, in class-list order
  std::vector<std::string> class_names;
  DenseArray class_embeddings;  // K x d, unit rows
  double background_weight = 0.2;
  double gamma = 0.5;
  double tau = 0.01;

  std::size_t num_classes() const noexcept { return class_ids.size(); }
  /// Position of a vocabulary id in the class list; throws UnknownCategory.
  std::size_t index_of(std::size_t vocabulary_id) const;
};

void validate(const DetectorHead& head);

/// Head for `class_ids`, each name embedded through every template.
DetectorHead make_head(const Vocabulary& vocab, const std::vector<std::size_t>& class_ids, const TextEncoder& text,
                       const std::vector<std::string>& templates, double tau = 0.01, double background_weight = 0.2,
                       double gamma = 0.5);

/// K+1 logits: cosine(v, l_c) / tau for every class, then 0 for background.
DenseArray class_logits(const DenseArray& v, const DetectorHead& head);
/// Softmax of class_logits; the last entry is background.
DenseArray class_probabilities(const DenseArray& v, const DetectorHead& head);
DenseArray class_scores(const VisualEncoderParams& params, const DenseArray& image, const Box& box,
                        const DetectorHead& head);

/// sqrt(objectness * class_prob).
double fuse_objectness(double objectness, double class_prob);

/// Greedy NMS. Sorted by descending score with ties to the lower input
/// index; an unkept box is suppressed when IoU > threshold with a kept box
/// (of the same class when `classwise`). Output keeps that sorted order.
std::vector<DetectionResult> nms(const std::vector<DetectionResult>& detections, double iou_threshold,
                                 bool classwise = true);

struct ZeroShotOptions {
  double nms_threshold = 0.9;
  bool drop_background = true;
  bool classwise_nms = true;
};

std::vector<DetectionResult> zero_shot_detect(const VisualEncoderParams& params, const Scene& scene,
                                              const std::vector<RegionProposal>& proposals, const DetectorHead& head,
                                              const ZeroShotOptions& options = {});
/// Same as above with a precomputed feature map of the scene image.
std::vector<DetectionResult> zero_shot_detect(const VisualEncoderParams& params, const DenseArray& fmap,
                                              std::size_t scene_id, const std::vector<RegionProposal>& proposals,
                                              const DetectorHead& head, const ZeroShotOptions& options = {});

/// (1 - p_b)^gamma.
double focal_weight(double p_b, double gamma);

/// Weighted cross-entropy of one region over K classes + background.
/// `label` == K means background. Weight is focal_weight(p_label, gamma)
/// for classes and background_weight for background; the focal factor is
/// differentiated along with the log term.
struct RegionLoss {
  double value = 0.0;
  DenseArray dlogits;  // K+1
};
RegionLoss weighted_region_loss(const DenseArray& logits, std::size_t label, double gamma, double background_weight);

/// Mean weighted_region_loss over labeled regions, with gradients on the
/// region features. Labels index the head's classes; num_classes() is background.
double finetune_loss_on_features(const std::vector<DenseArray>& features, const std::vector<std::size_t>& labels,
                                 const DetectorHead& head, std::vector<DenseArray>* grads);

struct FinetuneConfig {
  double lr = 0.002;
  std::size_t iterations = 300;
  std::size_t batch_images = 8;
  std::size_t regions_per_image = 16;
  double fg_iou = 0.5;
  double bg_iou = 0.4;
  double jitter_sigma = 0.1;
  std::uint64_t seed = 0;
};

void validate(const FinetuneConfig& config);

/// IoU labeling against annotated objects whose concept is in the head:
/// >= fg_iou gives that class, < bg_iou gives background (num_classes()),
/// anything else is ignored (kIgnoreLabel).
inline constexpr std::size_t kIgnoreLabel = static_cast<std::size_t>(-1);
std::size_t assign_region_label(const Box& box, const Scene& scene, const DetectorHead& head, double fg_iou,
                                double bg_iou);

Checkpoint finetune_detector(const FinetuneConfig& config, const Dataset& dataset, const Checkpoint& student,
                             const DetectorHead& head, const std::string& config_digest, const TrainLogger& log = {});

/// Fraction of ground-truth objects in `scenes` whose argmax over the head's
/// class logits (background excluded) is their own category. Objects whose
/// category is not in the head are skipped.
double region_classification_accuracy(const VisualEncoderParams& params, const std::vector<const Scene*>& scenes,
                                      const DetectorHead& head);

/// JSON lines {scene_id, box, category, score, config_digest, dataset_digest}.
void write_detections(const std::vector<DetectionResult>& detections, const DetectorHead& head,
                      const std::string& config_digest, const std::string& dataset_digest,
                      const std::filesystem::path& path);

/// Burns detection boxes into a copy of the image.
DenseArray draw_detections(const DenseArray& image, const std::vector<DetectionResult>& detections);

}  // namespace regalign
