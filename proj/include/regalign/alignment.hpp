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
#include <vector>

#include "regalign/box.hpp"
#include "regalign/corpus.hpp"
#include "regalign/encoders.hpp"
#include "regalign/scenes.hpp"

namespace regalign {

enum class ProposalSource { random, oracle_rpn, ground_truth };

const char* to_string(ProposalSource s);
ProposalSource parse_proposal_source(const std::string& name);

struct RegionProposal {
  Box box;
  double objectness = 1.0;
  ProposalSource source = ProposalSource::random;
};

struct RandomProposalConfig {
  double min_side = 8;
  double min_aspect = 1.0 / 3.0;
  double max_aspect = 3.0;
};

/// Uniform centres, log-uniform scale in [min_side, image side] and
/// log-uniform aspect; boxes are shifted (not clipped) to stay inside the
/// image. Objectness is 1 for every box.
std::vector<RegionProposal> propose_random(std::uint64_t seed, std::size_t n, std::size_t image_w,
                                           std::size_t image_h, const RandomProposalConfig& config = {});

/// Class-agnostic stand-in for an RPN: every ground-truth box with corner
/// noise N(0, jitter_sigma * side), the rest random distractors; objectness
/// is the max IoU against ground truth clamped to [0.05, 1].
std::vector<RegionProposal> propose_oracle_rpn(const Scene& scene, std::uint64_t seed, std::size_t n,
                                               double jitter_sigma, const RandomProposalConfig& config = {});

/// Every object box as a proposal with objectness 1.
std::vector<RegionProposal> propose_ground_truth(const Scene& scene);

struct RegionTextPair {
  std::size_t scene_id = 0;
  Box box;
  std::size_t concept_id = 0;  // argmax of the teacher's matching scores
  double teacher_score = 0.0;  // S(v_t, l_m)
  DenseArray soft_target;      // softmax(S(v_t, l_j) / tau) over the pool
};

struct PseudoLabels {
  std::vector<RegionTextPair> pairs;
  std::size_t skipped = 0;  // degenerate proposals
};

/// Teacher matching scores of one unit-norm feature against every pool row.
DenseArray matching_scores(const DenseArray& feature, const DenseArray& pool_embeddings);

/// Labels one region from a teacher feature (argmax ties -> lowest id).
RegionTextPair label_region(const DenseArray& teacher_feature, const DenseArray& pool_embeddings, double tau);

/// Pseudo-labels `proposals` with the frozen teacher. The overload taking a
/// feature map lets callers reuse a cached teacher encoding.
PseudoLabels pseudo_label(const VisualEncoderParams& teacher, const Scene& scene,
                          const std::vector<RegionProposal>& proposals, const ConceptPool& pool, double tau);
PseudoLabels pseudo_label(const VisualEncoderParams& teacher, const DenseArray& teacher_fmap, std::size_t scene_id,
                          const std::vector<RegionProposal>& proposals, const DenseArray& pool_embeddings,
                          double tau);

/// Concept ids matched to other regions of the batch, minus region i's own
/// label; sorted and deduplicated.
std::vector<std::size_t> collect_negatives(const std::vector<std::size_t>& batch_labels, std::size_t i);

/// JSON-lines inspection dump; soft targets above `full_threshold` entries
/// are reduced to their top-16 (id, prob) pairs.
void dump_pseudo_labels(const std::vector<RegionTextPair>& pairs, const std::filesystem::path& path,
                        std::size_t full_threshold = 16);

}  // namespace regalign
