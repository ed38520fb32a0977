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
#include <functional>
#include <string>
#include <vector>

#include "regalign/alignment.hpp"
#include "regalign/corpus.hpp"
#include "regalign/encoders.hpp"
#include "regalign/scenes.hpp"
#include "regalign/text_encoder.hpp"

namespace regalign {

struct LossSwitches {
  bool contrastive = true;
  bool distillation = true;
  bool image_contrastive = false;
};

/// Per-term multipliers; all 1 gives the plain sum of the three losses.
struct LossWeights {
  double contrastive = 1.0;
  double distillation = 1.0;
  double image_contrastive = 1.0;
};

struct TrainConfig {
  double lr = 0.002;
  double tau = 0.01;
  std::size_t batch_images = 8;
  std::size_t regions_per_image = 16;
  std::size_t iterations = 2000;
  LossSwitches losses;
  LossWeights weights;
  /// Adds the text-to-image direction to the image-level loss.
  bool symmetric_image_loss = false;
  ProposalSource proposals = ProposalSource::oracle_rpn;
  double jitter_sigma = 0.1;
  RandomProposalConfig random_proposals;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

struct LossReport {
  double contrastive = 0.0;
  double distillation = 0.0;
  double image_contrastive = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  /// One entry per parameter group: patch layers in order, then the head.
  std::vector<double> group_grad_norms;
};

/// Weighted sum of the enabled components; disabled ones contribute 0.
LossReport total_loss(const LossReport& components, const LossSwitches& enabled, const LossWeights& weights = {});

struct LossTerm {
  double value = 0.0;
  VisualEncoderParams grads;
};

// ---------------------------------------------------------------------------
// Batch representation

struct BatchImage {
  std::size_t scene_id = 0;
  const DenseArray* image = nullptr;
  std::vector<RegionTextPair> regions;
  /// Unit-norm embedding of the image's own caption (image-level loss).
  DenseArray caption_embedding;
};

using Batch = std::vector<BatchImage>;

/// Unit-norm features of every region (per image) and of each global box.
struct BatchFeatures {
  std::vector<std::vector<DenseArray>> regions;
  std::vector<DenseArray> global;
};

/// Loss gradients with respect to the features in BatchFeatures; an empty
/// array stands for a zero gradient.
using FeatureGrads = BatchFeatures;

/// A loss over batch features: returns its value and fills `grads`.
using FeatureLoss = std::function<double(const BatchFeatures& features, FeatureGrads& grads)>;

/// Forward every image and region of `batch`, evaluate `loss`, backpropagate
/// into the encoder. Images are processed in parallel and per-image
/// gradients are reduced in batch order, so results do not depend on the
/// thread count.
LossTerm evaluate_batch(const VisualEncoderParams& params, const Batch& batch, bool need_global,
                        const FeatureLoss& loss);

// Feature-level losses (v are unit-norm; pool rows are unit-norm).

/// L = (1/N) sum_i -log p(v_i, l_m) with negatives collected over the batch.
double region_contrastive_on_features(const std::vector<DenseArray>& features,
                                      const std::vector<std::size_t>& labels, const DenseArray& pool_embeddings,
                                      double tau, std::vector<DenseArray>* grads);

/// L = (1/N) sum_i KL(q_t_i || softmax(S(v_i, l_j) / tau)).
double distillation_on_features(const std::vector<DenseArray>& features,
                                const std::vector<const DenseArray*>& soft_targets,
                                const DenseArray& pool_embeddings, double tau, std::vector<DenseArray>* grads);

/// Image-to-text InfoNCE over in-batch captions; with `symmetric` the
/// text-to-image direction is averaged in.
double image_contrastive_on_features(const std::vector<DenseArray>& image_features,
                                     const std::vector<const DenseArray*>& caption_embeddings, double tau,
                                     bool symmetric, std::vector<DenseArray>* grads);

// Parameter-level losses.

LossTerm region_contrastive_loss(const VisualEncoderParams& student, const Batch& batch,
                                 const DenseArray& pool_embeddings, double tau);
LossTerm distillation_loss(const VisualEncoderParams& student, const Batch& batch, const DenseArray& pool_embeddings,
                           double tau);
LossTerm image_contrastive_loss(const VisualEncoderParams& student, const Batch& batch, double tau,
                                bool symmetric = false);

/// Every enabled term from one shared forward pass.
struct Objective {
  LossReport report;
  VisualEncoderParams grads;
};
Objective compute_objective(const VisualEncoderParams& student, const Batch& batch, const DenseArray& pool_embeddings,
                            const TrainConfig& config);

/// w <- w - lr * g.
void sgd_step(VisualEncoderParams& params, const VisualEncoderParams& grads, double lr);

std::vector<double> group_grad_norms(const VisualEncoderParams& grads);

// ---------------------------------------------------------------------------
// Training schedules

struct TrainLogEntry {
  std::size_t iter = 0;
  LossReport report;
};
using TrainLogger = std::function<void(const TrainLogEntry&)>;

/// Stage 0: seeded random init trained with the image-level loss only.
Checkpoint pretrain_image_level(const TrainConfig& config, const EncoderConfig& encoder, const Dataset& dataset,
                                const TextEncoder& text, const std::string& config_digest,
                                const TrainLogger& log = {});

/// Stage 1: student initialized from the teacher, trained on teacher
/// pseudo-labels of proposed regions.
Checkpoint pretrain_region_level(const TrainConfig& config, const Dataset& dataset, const Checkpoint& teacher,
                                 const ConceptPool& pool, const TextEncoder& text, const std::string& config_digest,
                                 const TrainLogger& log = {});

/// Iteration-`iter` batch: `batch_images` distinct training scenes.
std::vector<const Scene*> sample_batch(const std::vector<const Scene*>& scenes, std::size_t batch_images,
                                       std::uint64_t seed, std::size_t iter);

std::vector<RegionProposal> make_proposals(const Scene& scene, ProposalSource source, std::size_t n,
                                           double jitter_sigma, const RandomProposalConfig& random,
                                           std::uint64_t seed);

}  // namespace regalign
