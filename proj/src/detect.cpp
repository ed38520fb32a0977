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

#include "regalign/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "regalign/corpus.hpp"
#include "regalign/error.hpp"
#include "regalign/parallel.hpp"
#include "regalign/util.hpp"

namespace regalign {

std::size_t DetectorHead::index_of(std::size_t vocabulary_id) const {
  const auto it = std::find(class_ids.begin(), class_ids.end(), vocabulary_id);
  if (it == class_ids.end()) throw UnknownCategory("category " + std::to_string(vocabulary_id) + " not in the head");
  return std::size_t(it - class_ids.begin());
}

void validate(const DetectorHead& head) {
  if (head.class_ids.empty()) throw BadConfig("detector head has no classes");
  if (head.class_names.size() != head.class_ids.size()) throw BadConfig("one name per head class");
  if (head.class_embeddings.rank() != 2 || head.class_embeddings.extent(0) != head.class_ids.size())
    throw ShapeMismatch("head embeddings must be K x d");
  for (std::size_t c = 0; c < head.num_classes(); ++c)
    if (std::abs(l2_norm(head.class_embeddings.row(c)) - 1.0) > 1e-9) throw BadConfig("head rows must be unit norm");
  if (!(head.tau > 0)) throw NonPositiveTemperature("tau = " + std::to_string(head.tau));
  if (head.background_weight < 0) throw BadConfig("background_weight must be >= 0");
  if (head.gamma < 0) throw BadConfig("gamma must be >= 0");
}

DetectorHead make_head(const Vocabulary& vocab, const std::vector<std::size_t>& class_ids, const TextEncoder& text,
                       const std::vector<std::string>& templates, double tau, double background_weight, double gamma) {
  DetectorHead head;
  head.class_ids = class_ids;
  for (auto id : class_ids) {
    if (id >= vocab.size()) throw UnknownCategory("category " + std::to_string(id) + " outside the vocabulary");
    head.class_names.push_back(vocab.name(id));
  }
  if (head.class_names.empty()) throw BadConfig("detector head has no classes");
  head.class_embeddings = embed_concepts(head.class_names, templates, text);
  head.tau = tau;
  head.background_weight = background_weight;
  head.gamma = gamma;
  validate(head);
  return head;
}

DenseArray class_logits(const DenseArray& v, const DetectorHead& head) {
  const std::size_t k = head.num_classes();
  if (v.size() != head.class_embeddings.extent(1)) throw ShapeMismatch("feature and head dims differ");
  const double nv = l2_norm(v.values());
  if (nv < 1e-12) throw ZeroVector("region feature");
  DenseArray logits({k + 1});
  for (std::size_t c = 0; c < k; ++c) logits[c] = dot(v.values(), head.class_embeddings.row(c)) / nv / head.tau;
  logits[k] = 0.0;
  return logits;
}

DenseArray class_probabilities(const DenseArray& v, const DetectorHead& head) {
  return softmax_temp(class_logits(v, head), 1.0);
}

DenseArray class_scores(const VisualEncoderParams& params, const DenseArray& image, const Box& box,
                        const DetectorHead& head) {
  validate(head);
  return class_probabilities(region_feature(params, image, box), head);
}

double fuse_objectness(double objectness, double class_prob) {
  if (!(objectness >= 0 && objectness <= 1 && class_prob >= 0 && class_prob <= 1))
    throw BadConfig("fuse_objectness inputs must lie in [0, 1]");
  return std::sqrt(objectness * class_prob);
}

std::vector<DetectionResult> nms(const std::vector<DetectionResult>& detections, double iou_threshold,
                                 bool classwise) {
  if (!(iou_threshold > 0 && iou_threshold <= 1)) throw BadConfig("nms threshold must lie in (0, 1]");
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<DetectionResult> kept;
  for (auto i : order) {
    const auto& d = detections[i];
    bool suppressed = false;
    for (const auto& k : kept) {
      if (classwise && k.category_id != d.category_id) continue;
      if (k.scene_id != d.scene_id) continue;
      if (iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<DetectionResult> zero_shot_detect(const VisualEncoderParams& params, const DenseArray& fmap,
                                              std::size_t scene_id, const std::vector<RegionProposal>& proposals,
                                              const DetectorHead& head, const ZeroShotOptions& options) {
  validate(head);
  const std::size_t k = head.num_classes();
  std::vector<DetectionResult> raw;
  for (const auto& p : proposals) {
    RegionActivations act;
    try {
      act = forward_region(params, fmap, p.box);
    } catch (const DegenerateBox&) {
      continue;
    }
    const DenseArray probs = class_probabilities(act.v, head);
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (probs[c] > probs[best]) best = c;
    if (options.drop_background && probs[k] > probs[best]) continue;
    const double score = fuse_objectness(std::clamp(p.objectness, 0.0, 1.0), probs[best]);
    if (!(score > 0)) continue;
    raw.push_back({scene_id, p.box, best, std::min(score, 1.0)});
  }
  return nms(raw, options.nms_threshold, options.classwise_nms);
}

std::vector<DetectionResult> zero_shot_detect(const VisualEncoderParams& params, const Scene& scene,
                                              const std::vector<RegionProposal>& proposals, const DetectorHead& head,
                                              const ZeroShotOptions& options) {
  if (proposals.empty()) return {};
  return zero_shot_detect(params, encode_image(params, scene.image), scene.id, proposals, head, options);
}

double focal_weight(double p_b, double gamma) {
  if (!(p_b >= 0 && p_b <= 1)) throw BadConfig("focal_weight needs p in [0, 1]");
  if (!(gamma >= 0)) throw BadConfig("gamma must be >= 0");
  return std::pow(1.0 - p_b, gamma);
}

RegionLoss weighted_region_loss(const DenseArray& logits, std::size_t label, double gamma, double background_weight) {
  const std::size_t n = logits.size();
  if (label >= n) throw UnknownCategory("region label " + std::to_string(label) + " outside the logits");
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  double s = 0.0;
  for (double z : logits.values()) s += std::exp(z - mx);
  const double lse = mx + std::log(s);
  DenseArray p({n});
  for (std::size_t k = 0; k < n; ++k) p[k] = std::exp(logits[k] - lse);
  const double logp = logits[label] - lse;

  RegionLoss out;
  out.dlogits = DenseArray({n});
  double coef;  // dL/dz_k = coef * (delta_k - p_k)
  if (label == n - 1) {
    out.value = -background_weight * logp;
    coef = -background_weight;
  } else {
    const double q = 1.0 - p[label];
    const double w = std::pow(q, gamma);
    out.value = -w * logp;
    const double dw = (gamma > 0 && q > 0) ? gamma * std::pow(q, gamma - 1.0) * p[label] * logp : 0.0;
    coef = dw - w;
  }
  for (std::size_t k = 0; k < n; ++k) out.dlogits[k] = coef * ((k == label ? 1.0 : 0.0) - p[k]);
  return out;
}

double finetune_loss_on_features(const std::vector<DenseArray>& features, const std::vector<std::size_t>& labels,
                                 const DetectorHead& head, std::vector<DenseArray>* grads) {
  if (labels.size() != features.size()) throw ShapeMismatch("one label per region");
  const std::size_t k = head.num_classes();
  std::size_t n = 0;
  for (auto l : labels)
    if (l != kIgnoreLabel) ++n;
  if (n == 0) throw EmptyBatch("no labeled regions");
  if (grads != nullptr) grads->assign(features.size(), DenseArray());
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    const auto& v = features[i];
    DenseArray logits({k + 1});
    for (std::size_t c = 0; c < k; ++c) logits[c] = dot(v.values(), head.class_embeddings.row(c)) / head.tau;
    const RegionLoss r = weighted_region_loss(logits, labels[i], head.gamma, head.background_weight);
    total += r.value;
    if (grads != nullptr) {
      DenseArray g(v.shape());
      for (std::size_t c = 0; c < k; ++c) {
        const double a = r.dlogits[c] / head.tau / double(n);
        const auto row = head.class_embeddings.row(c);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += a * row[j];
      }
      (*grads)[i] = std::move(g);
    }
  }
  return total / double(n);
}

void validate(const FinetuneConfig& c) {
  if (!(c.lr > 0)) throw BadConfig("lr must be > 0");
  if (c.batch_images < 1) throw BadConfig("batch_images must be >= 1");
  if (c.regions_per_image < 1) throw BadConfig("regions_per_image must be >= 1");
  if (!(c.fg_iou > 0 && c.fg_iou <= 1)) throw BadConfig("fg_iou must lie in (0, 1]");
  if (!(c.bg_iou >= 0 && c.bg_iou <= c.fg_iou)) throw BadConfig("bg_iou must lie in [0, fg_iou]");
  if (c.jitter_sigma < 0) throw BadConfig("jitter_sigma must be >= 0");
}

std::size_t assign_region_label(const Box& box, const Scene& scene, const DetectorHead& head, double fg_iou,
                                double bg_iou) {
  double best = 0.0;
  std::size_t best_class = head.num_classes();
  for (const auto& o : scene.objects) {
    if (!o.annotated) continue;
    const auto it = std::find(head.class_ids.begin(), head.class_ids.end(), o.concept_id);
    if (it == head.class_ids.end()) continue;
    const double v = iou(box, o.box);
    if (v > best) {
      best = v;
      best_class = std::size_t(it - head.class_ids.begin());
    }
  }
  if (best >= fg_iou) return best_class;
  if (best < bg_iou) return head.num_classes();
  return kIgnoreLabel;
}

Checkpoint finetune_detector(const FinetuneConfig& config, const Dataset& dataset, const Checkpoint& student,
                             const DetectorHead& head, const std::string& config_digest, const TrainLogger& log) {
  validate(config);
  validate(head);
  validate(student.params);
  const auto train = dataset.split(Split::train);
  bool any_base = false;
  for (const Scene* s : train)
    for (const auto& o : s->objects)
      if (o.annotated && std::find(head.class_ids.begin(), head.class_ids.end(), o.concept_id) != head.class_ids.end())
        any_base = true;
  if (!any_base) throw NoBaseAnnotations("no annotated objects of the head's classes in the training split");

  VisualEncoderParams params = init_student_from_teacher(student.params);
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    const auto scenes = sample_batch(train, config.batch_images, config.seed, iter);
    Batch batch(scenes.size());
    for (std::size_t b = 0; b < scenes.size(); ++b) {
      const Scene& s = *scenes[b];
      const auto proposals =
          propose_oracle_rpn(s, mix_seed(mix_seed(config.seed ^ 0xf1e7, iter), s.id),
                             std::max(config.regions_per_image, s.objects.size()), config.jitter_sigma);
      batch[b].scene_id = s.id;
      batch[b].image = &s.image;
      for (const auto& p : proposals) {
        const std::size_t label = assign_region_label(p.box, s, head, config.fg_iou, config.bg_iou);
        if (label == kIgnoreLabel) continue;
        RegionTextPair pair;
        pair.scene_id = s.id;
        pair.box = p.box;
        pair.concept_id = label;
        batch[b].regions.push_back(std::move(pair));
      }
    }
    std::size_t n_regions = 0;
    for (const auto& b : batch) n_regions += b.regions.size();
    if (n_regions == 0) continue;

    LossTerm term = evaluate_batch(params, batch, false, [&](const BatchFeatures& f, FeatureGrads& g) {
      std::vector<DenseArray> feats;
      std::vector<std::size_t> labels;
      for (std::size_t b = 0; b < batch.size(); ++b)
        for (std::size_t i = 0; i < batch[b].regions.size(); ++i) {
          feats.push_back(f.regions[b][i]);
          labels.push_back(batch[b].regions[i].concept_id);
        }
      std::vector<DenseArray> dv;
      const double value = finetune_loss_on_features(feats, labels, head, &dv);
      std::size_t k = 0;
      for (auto& image : g.regions)
        for (auto& slot : image) slot = std::move(dv[k++]);
      return value;
    });
    if (log) {
      LossReport r;
      r.total = term.value;
      r.group_grad_norms = group_grad_norms(term.grads);
      double sq = 0.0;
      for (double x : r.group_grad_norms) sq += x * x;
      r.grad_norm = std::sqrt(sq);
      log({iter, r});
    }
    sgd_step(params, term.grads, config.lr);
  }
  return Checkpoint{std::move(params), "finetune", config.seed, config_digest, config.iterations};
}

double region_classification_accuracy(const VisualEncoderParams& params, const std::vector<const Scene*>& scenes,
                                      const DetectorHead& head) {
  validate(head);
  const std::size_t k = head.num_classes();
  std::vector<std::size_t> correct(scenes.size(), 0), total(scenes.size(), 0);
  parallel_for(scenes.size(), [&](std::size_t i) {
    const Scene& s = *scenes[i];
    const DenseArray fmap = forward_image(params, s.image, false).fmap;
    for (const auto& o : s.objects) {
      const auto it = std::find(head.class_ids.begin(), head.class_ids.end(), o.concept_id);
      if (it == head.class_ids.end()) continue;
      const DenseArray logits = class_logits(forward_region(params, fmap, o.box).v, head);
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (logits[c] > logits[best]) best = c;
      ++total[i];
      if (best == std::size_t(it - head.class_ids.begin())) ++correct[i];
    }
  });
  const std::size_t n = std::accumulate(total.begin(), total.end(), std::size_t(0));
  if (n == 0) throw NoGroundTruth("no ground-truth objects of the head's classes");
  return double(std::accumulate(correct.begin(), correct.end(), std::size_t(0))) / double(n);
}

void write_detections(const std::vector<DetectionResult>& detections, const DetectorHead& head,
                      const std::string& config_digest, const std::string& dataset_digest,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& d : detections) {
    nlohmann::json j = {{"scene_id", d.scene_id},
                        {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                        {"category", head.class_names.at(d.category_id)},
                        {"score", d.score},
                        {"config_digest", config_digest},
                        {"dataset_digest", dataset_digest}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DenseArray draw_detections(const DenseArray& image, const std::vector<DetectionResult>& detections) {
  if (image.rank() != 3 || image.extent(2) != 3) throw BadShape("expected an H x W x 3 image");
  DenseArray out = image;
  const long h = long(image.extent(0)), w = long(image.extent(1));
  for (const auto& d : detections) {
    const std::uint64_t hsh = mix_seed(0xc0105, d.category_id);
    const double rgb[3] = {double(hsh & 0xff) / 255.0, double((hsh >> 8) & 0xff) / 255.0,
                           double((hsh >> 16) & 0xff) / 255.0};
    const long x1 = std::clamp(long(std::floor(d.box.x1)), 0L, w - 1);
    const long x2 = std::clamp(long(std::ceil(d.box.x2)) - 1, 0L, w - 1);
    const long y1 = std::clamp(long(std::floor(d.box.y1)), 0L, h - 1);
    const long y2 = std::clamp(long(std::ceil(d.box.y2)) - 1, 0L, h - 1);
    auto put = [&](long y, long x) {
      for (std::size_t c = 0; c < 3; ++c) out[(std::size_t(y) * std::size_t(w) + std::size_t(x)) * 3 + c] = rgb[c];
    };
    for (long x = x1; x <= x2; ++x) put(y1, x), put(y2, x);
    for (long y = y1; y <= y2; ++y) put(y, x1), put(y, x2);
  }
  return out;
}

}  // namespace regalign
