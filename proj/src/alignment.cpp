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

#include "regalign/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "regalign/error.hpp"
#include "regalign/util.hpp"

namespace regalign {

const char* to_string(ProposalSource s) {
  switch (s) {
    case ProposalSource::random:
      return "random";
    case ProposalSource::oracle_rpn:
      return "oracle_rpn";
    case ProposalSource::ground_truth:
      return "ground_truth";
  }
  return "?";
}

ProposalSource parse_proposal_source(const std::string& name) {
  if (name == "random") return ProposalSource::random;
  if (name == "oracle_rpn") return ProposalSource::oracle_rpn;
  if (name == "ground_truth") return ProposalSource::ground_truth;
  throw BadConfig("unknown proposal source \"" + name + "\"");
}

std::vector<RegionProposal> propose_random(std::uint64_t seed, std::size_t n, std::size_t image_w,
                                           std::size_t image_h, const RandomProposalConfig& config) {
  if (n < 1) throw BadConfig("need at least one proposal");
  if (config.min_side < 2) throw BadConfig("min_side must be >= 2");
  const double w_img = double(image_w), h_img = double(image_h);
  const double max_side = std::min(w_img, h_img);
  if (config.min_side > max_side) throw BadConfig("min_side exceeds the image side");
  if (!(config.min_aspect > 0 && config.min_aspect <= config.max_aspect)) throw BadConfig("aspect bounds");

  Rng rng(mix_seed(seed, 0x9a9d));
  std::vector<RegionProposal> out;
  out.reserve(n);
  const double log_lo = std::log(config.min_side), log_hi = std::log(max_side);
  const double alog_lo = std::log(config.min_aspect), alog_hi = std::log(config.max_aspect);
  for (std::size_t k = 0; k < n; ++k) {
    const double cx = rng.uniform(0, w_img), cy = rng.uniform(0, h_img);
    const double scale = std::exp(rng.uniform(log_lo, log_hi));
    const double aspect = std::exp(rng.uniform(alog_lo, alog_hi));
    const double w = std::clamp(scale * std::sqrt(aspect), config.min_side, w_img);
    const double h = std::clamp(scale / std::sqrt(aspect), config.min_side, h_img);
    const double x1 = std::clamp(cx - 0.5 * w, 0.0, w_img - w);
    const double y1 = std::clamp(cy - 0.5 * h, 0.0, h_img - h);
    out.push_back({Box{x1, y1, x1 + w, y1 + h}, 1.0, ProposalSource::random});
  }
  return out;
}

std::vector<RegionProposal> propose_oracle_rpn(const Scene& scene, std::uint64_t seed, std::size_t n,
                                               double jitter_sigma, const RandomProposalConfig& config) {
  if (n < scene.objects.size()) throw BadConfig("fewer proposals than objects");
  if (jitter_sigma < 0) throw BadConfig("jitter_sigma must be >= 0");
  const double w_img = double(scene.image.extent(1)), h_img = double(scene.image.extent(0));
  Rng rng(mix_seed(seed, 0x0a1c));
  std::vector<RegionProposal> out;
  for (const auto& o : scene.objects) {
    Box b = o.box;
    if (jitter_sigma > 0) {
      const double sx = jitter_sigma * o.box.width(), sy = jitter_sigma * o.box.height();
      b.x1 += rng.normal() * sx;
      b.x2 += rng.normal() * sx;
      b.y1 += rng.normal() * sy;
      b.y2 += rng.normal() * sy;
      if (b.x1 > b.x2) std::swap(b.x1, b.x2);
      if (b.y1 > b.y2) std::swap(b.y1, b.y2);
      b = b.clipped(w_img, h_img);
      // Keep at least a pixel of extent so the proposal stays valid.
      if (b.width() < 1.0) b.x2 = std::min(w_img, b.x1 + 1.0), b.x1 = b.x2 - 1.0;
      if (b.height() < 1.0) b.y2 = std::min(h_img, b.y1 + 1.0), b.y1 = b.y2 - 1.0;
    }
    out.push_back({b, 1.0, ProposalSource::oracle_rpn});
  }
  if (n > out.size()) {
    auto distractors = propose_random(mix_seed(seed, 0xd157), n - out.size(), scene.image.extent(1),
                                      scene.image.extent(0), config);
    for (auto& d : distractors) out.push_back({d.box, 1.0, ProposalSource::oracle_rpn});
  }
  for (auto& p : out) {
    double best = 0.0;
    for (const auto& o : scene.objects) best = std::max(best, iou(p.box, o.box));
    p.objectness = std::clamp(best, 0.05, 1.0);
  }
  return out;
}

std::vector<RegionProposal> propose_ground_truth(const Scene& scene) {
  std::vector<RegionProposal> out;
  for (const auto& o : scene.objects) out.push_back({o.box, 1.0, ProposalSource::ground_truth});
  return out;
}

DenseArray matching_scores(const DenseArray& feature, const DenseArray& pool_embeddings) {
  const std::size_t c = pool_embeddings.extent(0);
  const double nf = l2_norm(feature.values());
  if (nf < 1e-12) throw ZeroVector("teacher feature");
  DenseArray scores({c});
  for (std::size_t j = 0; j < c; ++j) {
    const auto row = pool_embeddings.row(j);
    scores[j] = dot(feature.values(), row) / (nf * l2_norm(row));
  }
  return scores;
}

RegionTextPair label_region(const DenseArray& teacher_feature, const DenseArray& pool_embeddings, double tau) {
  RegionTextPair pair;
  const DenseArray scores = matching_scores(teacher_feature, pool_embeddings);
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j)
    if (scores[j] > scores[best]) best = j;
  pair.concept_id = best;
  pair.teacher_score = scores[best];
  pair.soft_target = softmax_temp(scores, tau);
  return pair;
}

PseudoLabels pseudo_label(const VisualEncoderParams& teacher, const DenseArray& teacher_fmap, std::size_t scene_id,
                          const std::vector<RegionProposal>& proposals, const DenseArray& pool_embeddings,
                          double tau) {
  if (pool_embeddings.rank() != 2 || pool_embeddings.extent(0) == 0) throw EmptyPool("empty concept pool");
  if (!(tau > 0)) throw NonPositiveTemperature("tau = " + std::to_string(tau));
  PseudoLabels out;
  for (const auto& p : proposals) {
    try {
      const auto act = forward_region(teacher, teacher_fmap, p.box);
      RegionTextPair pair = label_region(act.v, pool_embeddings, tau);
      pair.scene_id = scene_id;
      pair.box = p.box;
      out.pairs.push_back(std::move(pair));
    } catch (const DegenerateBox&) {
      ++out.skipped;
    }
  }
  return out;
}

PseudoLabels pseudo_label(const VisualEncoderParams& teacher, const Scene& scene,
                          const std::vector<RegionProposal>& proposals, const ConceptPool& pool, double tau) {
  if (pool.size() == 0) throw EmptyPool("empty concept pool");
  return pseudo_label(teacher, encode_image(teacher, scene.image), scene.id, proposals, pool.embeddings, tau);
}

std::vector<std::size_t> collect_negatives(const std::vector<std::size_t>& batch_labels, std::size_t i) {
  std::vector<std::size_t> out;
  if (i >= batch_labels.size()) return out;
  for (std::size_t k = 0; k < batch_labels.size(); ++k)
    if (k != i && batch_labels[k] != batch_labels[i]) out.push_back(batch_labels[k]);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void dump_pseudo_labels(const std::vector<RegionTextPair>& pairs, const std::filesystem::path& path,
                        std::size_t full_threshold) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::json j = {{"scene_id", p.scene_id},
                        {"box", {p.box.x1, p.box.y1, p.box.x2, p.box.y2}},
                        {"concept_id", p.concept_id},
                        {"teacher_score", p.teacher_score}};
    const std::size_t c = p.soft_target.size();
    if (c <= full_threshold) {
      j["soft_target"] = std::vector<double>(p.soft_target.values().begin(), p.soft_target.values().end());
    } else {
      std::vector<std::size_t> idx(c);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return p.soft_target[a] > p.soft_target[b]; });
      nlohmann::json top = nlohmann::json::array();
      for (std::size_t k = 0; k < 16; ++k) top.push_back({idx[k], p.soft_target[idx[k]]});
      j["soft_target_top16"] = top;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace regalign
