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

#include "regalign/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "regalign/error.hpp"
#include "regalign/parallel.hpp"
#include "regalign/util.hpp"

namespace regalign {

void validate(const TrainConfig& c) {
  if (!(c.lr > 0)) throw BadConfig("lr must be > 0");
  if (!(c.tau > 0)) throw BadConfig("tau must be > 0");
  if (c.batch_images < 1) throw BadConfig("batch_images must be >= 1");
  if (c.regions_per_image < 1) throw BadConfig("regions_per_image must be >= 1");
  if (!c.losses.contrastive && !c.losses.distillation && !c.losses.image_contrastive)
    throw BadConfig("at least one loss must be enabled");
  if (c.weights.contrastive < 0 || c.weights.distillation < 0 || c.weights.image_contrastive < 0)
    throw BadConfig("loss weights must be >= 0");
}

LossReport total_loss(const LossReport& components, const LossSwitches& enabled, const LossWeights& weights) {
  LossReport r = components;
  if (!enabled.contrastive) r.contrastive = 0.0;
  if (!enabled.distillation) r.distillation = 0.0;
  if (!enabled.image_contrastive) r.image_contrastive = 0.0;
  r.total = weights.contrastive * r.contrastive + weights.distillation * r.distillation +
            weights.image_contrastive * r.image_contrastive;
  return r;
}

// ---------------------------------------------------------------------------
// Batch engine

LossTerm evaluate_batch(const VisualEncoderParams& params, const Batch& batch, bool need_global,
                        const FeatureLoss& loss) {
  if (batch.empty()) throw EmptyBatch("no images in batch");
  const std::size_t n_images = batch.size();
  std::vector<ImageActivations> images(n_images);
  std::vector<std::vector<RegionActivations>> regions(n_images);
  std::vector<RegionActivations> globals(n_images);
  BatchFeatures features;
  features.regions.resize(n_images);
  if (need_global) features.global.resize(n_images);

  parallel_for(n_images, [&](std::size_t b) {
    const auto& item = batch[b];
    if (item.image == nullptr) throw EmptyBatch("batch image without pixels");
    images[b] = forward_image(params, *item.image, false);
    for (const auto& r : item.regions) {
      regions[b].push_back(forward_region(params, images[b].fmap, r.box));
      features.regions[b].push_back(regions[b].back().v);
    }
    if (need_global) {
      globals[b] = forward_region(params, images[b].fmap, global_box(*item.image));
      features.global[b] = globals[b].v;
    }
  });

  FeatureGrads grads;
  grads.regions.resize(n_images);
  for (std::size_t b = 0; b < n_images; ++b) grads.regions[b].resize(features.regions[b].size());
  if (need_global) grads.global.resize(n_images);

  LossTerm out;
  out.value = loss(features, grads);

  std::vector<VisualEncoderParams> per_image(n_images);
  parallel_for(n_images, [&](std::size_t b) {
    per_image[b] = VisualEncoderParams::zeros_like(params);
    DenseArray dfmap(images[b].fmap.shape());
    bool any = false;
    for (std::size_t i = 0; i < regions[b].size(); ++i) {
      if (grads.regions[b][i].size() == 0) continue;
      backward_region(params, regions[b][i], grads.regions[b][i], per_image[b], dfmap);
      any = true;
    }
    if (need_global && grads.global[b].size() != 0) {
      backward_region(params, globals[b], grads.global[b], per_image[b], dfmap);
      any = true;
    }
    if (any) backward_image(params, images[b], dfmap, per_image[b], false);
  });

  out.grads = VisualEncoderParams::zeros_like(params);
  auto dst = out.grads.arrays();
  for (std::size_t b = 0; b < n_images; ++b) {
    const auto src = per_image[b].arrays();
    for (std::size_t k = 0; k < dst.size(); ++k) axpy(1.0, *src[k], *dst[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature-level losses

namespace {

void add_scaled_row(DenseArray& dst, double alpha, std::span<const double> row) {
  for (std::size_t k = 0; k < row.size(); ++k) dst[k] += alpha * row[k];
}

double log_sum_exp(const std::vector<double>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

double region_contrastive_on_features(const std::vector<DenseArray>& features,
                                      const std::vector<std::size_t>& labels, const DenseArray& pool_embeddings,
                                      double tau, std::vector<DenseArray>* grads) {
  const std::size_t n = features.size();
  if (n == 0) throw EmptyBatch("no regions");
  if (labels.size() != n) throw ShapeMismatch("one label per region");
  if (!(tau > 0)) throw NonPositiveTemperature("tau = " + std::to_string(tau));
  // Negatives of region i are the distinct batch labels other than its own.
  std::vector<std::size_t> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (auto l : distinct)
    if (l >= pool_embeddings.extent(0)) throw ShapeMismatch("label outside the pool");

  if (grads != nullptr) grads->assign(n, DenseArray());
  double total = 0.0;
  std::vector<double> logits;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = features[i];
    logits.clear();
    ids.clear();
    ids.push_back(labels[i]);
    for (auto l : distinct)
      if (l != labels[i]) ids.push_back(l);
    for (auto id : ids) logits.push_back(dot(v.values(), pool_embeddings.row(id)) / tau);
    const double lse = log_sum_exp(logits);
    total += lse - logits[0];
    if (grads != nullptr) {
      DenseArray g(v.shape());
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const double p = std::exp(logits[k] - lse);
        const double ds = (p - (k == 0 ? 1.0 : 0.0)) / tau / double(n);
        add_scaled_row(g, ds, pool_embeddings.row(ids[k]));
      }
      (*grads)[i] = std::move(g);
    }
  }
  return total / double(n);
}

double distillation_on_features(const std::vector<DenseArray>& features,
                                const std::vector<const DenseArray*>& soft_targets,
                                const DenseArray& pool_embeddings, double tau, std::vector<DenseArray>* grads) {
  const std::size_t n = features.size();
  if (n == 0) throw EmptyBatch("no regions");
  if (soft_targets.size() != n) throw ShapeMismatch("one soft target per region");
  const std::size_t c = pool_embeddings.extent(0);
  if (grads != nullptr) grads->assign(n, DenseArray());
  double total = 0.0;
  DenseArray scores({c});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = features[i];
    if (soft_targets[i] == nullptr || soft_targets[i]->size() != c)
      throw NotADistribution("soft target must cover all " + std::to_string(c) + " concepts");
    for (std::size_t j = 0; j < c; ++j) scores[j] = dot(v.values(), pool_embeddings.row(j));
    const DenseArray q = softmax_temp(scores, tau);
    const GradPair kl = kl_divergence(*soft_targets[i], q);
    total += kl.value;
    if (grads != nullptr) {
      DenseArray g(v.shape());
      for (std::size_t j = 0; j < c; ++j) add_scaled_row(g, kl.grad[0][j] / tau / double(n), pool_embeddings.row(j));
      (*grads)[i] = std::move(g);
    }
  }
  return total / double(n);
}

double image_contrastive_on_features(const std::vector<DenseArray>& image_features,
                                     const std::vector<const DenseArray*>& caption_embeddings, double tau,
                                     bool symmetric, std::vector<DenseArray>* grads) {
  const std::size_t n = image_features.size();
  if (n == 0) throw EmptyBatch("no images");
  if (caption_embeddings.size() != n) throw ShapeMismatch("one caption per image");
  if (!(tau > 0)) throw NonPositiveTemperature("tau = " + std::to_string(tau));
  for (const auto* t : caption_embeddings)
    if (t == nullptr || t->size() != image_features[0].size()) throw ShapeMismatch("caption embedding size");

  // logits[b][k] = S(v_b, t_k) / tau
  std::vector<std::vector<double>> logits(n, std::vector<double>(n));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < n; ++k)
      logits[b][k] = dot(image_features[b].values(), caption_embeddings[k]->values()) / tau;

  std::vector<std::vector<double>> dlogits(n, std::vector<double>(n, 0.0));
  const double dir_weight = symmetric ? 0.5 : 1.0;
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const double lse = log_sum_exp(logits[b]);
    total += dir_weight * (lse - logits[b][b]);
    for (std::size_t k = 0; k < n; ++k)
      dlogits[b][k] += dir_weight * (std::exp(logits[b][k] - lse) - (k == b ? 1.0 : 0.0)) / double(n);
  }
  if (symmetric) {
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t b = 0; b < n; ++b) col[b] = logits[b][k];
      const double lse = log_sum_exp(col);
      total += dir_weight * (lse - col[k]);
      for (std::size_t b = 0; b < n; ++b)
        dlogits[b][k] += dir_weight * (std::exp(col[b] - lse) - (b == k ? 1.0 : 0.0)) / double(n);
    }
  }
  if (grads != nullptr) {
    grads->assign(n, DenseArray());
    for (std::size_t b = 0; b < n; ++b) {
      DenseArray g(image_features[b].shape());
      for (std::size_t k = 0; k < n; ++k) add_scaled_row(g, dlogits[b][k] / tau, caption_embeddings[k]->values());
      (*grads)[b] = std::move(g);
    }
  }
  return total / double(n);
}

// ---------------------------------------------------------------------------
// Parameter-level losses

namespace {

struct Flat {
  std::vector<DenseArray> features;
  std::vector<std::size_t> labels;
  std::vector<const DenseArray*> targets;
};

Flat flatten(const Batch& batch, const BatchFeatures& f) {
  Flat out;
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t i = 0; i < batch[b].regions.size(); ++i) {
      out.features.push_back(f.regions[b][i]);
      out.labels.push_back(batch[b].regions[i].concept_id);
      out.targets.push_back(&batch[b].regions[i].soft_target);
    }
  return out;
}

void scatter(const std::vector<DenseArray>& flat, double weight, FeatureGrads& g) {
  std::size_t k = 0;
  for (auto& image : g.regions)
    for (auto& slot : image) {
      const auto& src = flat[k++];
      if (src.size() == 0 || weight == 0.0) continue;
      if (slot.size() == 0) slot = DenseArray(src.shape());
      axpy(weight, src, slot);
    }
}

void scatter_global(const std::vector<DenseArray>& flat, double weight, FeatureGrads& g) {
  for (std::size_t b = 0; b < flat.size(); ++b) {
    if (weight == 0.0) continue;
    if (g.global[b].size() == 0) g.global[b] = DenseArray(flat[b].shape());
    axpy(weight, flat[b], g.global[b]);
  }
}

std::vector<const DenseArray*> captions_of(const Batch& batch) {
  std::vector<const DenseArray*> out;
  for (const auto& b : batch) {
    if (b.caption_embedding.size() == 0) throw EmptyBatch("image without caption embedding");
    out.push_back(&b.caption_embedding);
  }
  return out;
}

}  // namespace

LossTerm region_contrastive_loss(const VisualEncoderParams& student, const Batch& batch,
                                 const DenseArray& pool_embeddings, double tau) {
  return evaluate_batch(student, batch, false, [&](const BatchFeatures& f, FeatureGrads& g) {
    const Flat flat = flatten(batch, f);
    std::vector<DenseArray> dv;
    const double value = region_contrastive_on_features(flat.features, flat.labels, pool_embeddings, tau, &dv);
    scatter(dv, 1.0, g);
    return value;
  });
}

LossTerm distillation_loss(const VisualEncoderParams& student, const Batch& batch, const DenseArray& pool_embeddings,
                           double tau) {
  return evaluate_batch(student, batch, false, [&](const BatchFeatures& f, FeatureGrads& g) {
    const Flat flat = flatten(batch, f);
    std::vector<DenseArray> dv;
    const double value = distillation_on_features(flat.features, flat.targets, pool_embeddings, tau, &dv);
    scatter(dv, 1.0, g);
    return value;
  });
}

LossTerm image_contrastive_loss(const VisualEncoderParams& student, const Batch& batch, double tau, bool symmetric) {
  const auto captions = captions_of(batch);
  return evaluate_batch(student, batch, true, [&](const BatchFeatures& f, FeatureGrads& g) {
    std::vector<DenseArray> dv;
    const double value = image_contrastive_on_features(f.global, captions, tau, symmetric, &dv);
    scatter_global(dv, 1.0, g);
    return value;
  });
}

Objective compute_objective(const VisualEncoderParams& student, const Batch& batch, const DenseArray& pool_embeddings,
                            const TrainConfig& config) {
  const auto& on = config.losses;
  const auto& w = config.weights;
  LossReport components;
  std::vector<const DenseArray*> captions;
  if (on.image_contrastive) captions = captions_of(batch);

  LossTerm term = evaluate_batch(student, batch, on.image_contrastive, [&](const BatchFeatures& f, FeatureGrads& g) {
    if (on.contrastive || on.distillation) {
      const Flat flat = flatten(batch, f);
      std::vector<DenseArray> dv;
      if (on.contrastive) {
        components.contrastive =
            region_contrastive_on_features(flat.features, flat.labels, pool_embeddings, config.tau, &dv);
        scatter(dv, w.contrastive, g);
      }
      if (on.distillation) {
        components.distillation =
            distillation_on_features(flat.features, flat.targets, pool_embeddings, config.tau, &dv);
        scatter(dv, w.distillation, g);
      }
    }
    if (on.image_contrastive) {
      std::vector<DenseArray> dv;
      components.image_contrastive =
          image_contrastive_on_features(f.global, captions, config.tau, config.symmetric_image_loss, &dv);
      scatter_global(dv, w.image_contrastive, g);
    }
    return total_loss(components, on, w).total;
  });

  Objective out;
  out.report = total_loss(components, on, w);
  out.report.group_grad_norms = group_grad_norms(term.grads);
  double sq = 0.0;
  for (double g : out.report.group_grad_norms) sq += g * g;
  out.report.grad_norm = std::sqrt(sq);
  out.grads = std::move(term.grads);
  return out;
}

void sgd_step(VisualEncoderParams& params, const VisualEncoderParams& grads, double lr) {
  if (!(lr > 0)) throw BadConfig("lr must be > 0");
  auto dst = params.arrays();
  const auto src = grads.arrays();
  if (dst.size() != src.size()) throw ShapeMismatch("gradient has a different layer count");
  for (std::size_t k = 0; k < dst.size(); ++k) {
    if (!dst[k]->same_shape(*src[k])) throw ShapeMismatch("gradient array " + std::to_string(k) + " shape");
    axpy(-lr, *src[k], *dst[k]);
  }
}

std::vector<double> group_grad_norms(const VisualEncoderParams& grads) {
  std::vector<double> out;
  auto norm2 = [](const Linear& l) { return dot(l.weight.values(), l.weight.values()) + dot(l.bias.values(), l.bias.values()); };
  for (const auto& l : grads.patch_layers) out.push_back(std::sqrt(norm2(l)));
  out.push_back(std::sqrt(norm2(grads.head)));
  return out;
}

// ---------------------------------------------------------------------------
// Schedules

std::vector<const Scene*> sample_batch(const std::vector<const Scene*>& scenes, std::size_t batch_images,
                                       std::uint64_t seed, std::size_t iter) {
  if (scenes.empty()) throw EmptyBatch("no training scenes");
  std::vector<std::size_t> idx(scenes.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(mix_seed(seed, 0xba7c), iter));
  const std::size_t k = std::min(batch_images, scenes.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  std::vector<const Scene*> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(scenes[idx[i]]);
  return out;
}

std::vector<RegionProposal> make_proposals(const Scene& scene, ProposalSource source, std::size_t n,
                                           double jitter_sigma, const RandomProposalConfig& random,
                                           std::uint64_t seed) {
  switch (source) {
    case ProposalSource::random:
      return propose_random(seed, n, scene.image.extent(1), scene.image.extent(0), random);
    case ProposalSource::oracle_rpn:
      return propose_oracle_rpn(scene, seed, std::max(n, scene.objects.size()), jitter_sigma, random);
    case ProposalSource::ground_truth:
      return propose_ground_truth(scene);
  }
  return {};
}

namespace {

std::vector<DenseArray> caption_embeddings(const std::vector<const Scene*>& scenes, const TextEncoder& text) {
  std::vector<DenseArray> out(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) { out[i] = text.encode(scenes[i]->caption); });
  return out;
}

std::size_t index_of(const std::vector<const Scene*>& scenes, const Scene* s) {
  return std::size_t(std::find(scenes.begin(), scenes.end(), s) - scenes.begin());
}

}  // namespace

Checkpoint pretrain_image_level(const TrainConfig& config, const EncoderConfig& encoder, const Dataset& dataset,
                                const TextEncoder& text, const std::string& config_digest, const TrainLogger& log) {
  validate(config);
  if (encoder.embed_dim != text.dim()) throw BadConfig("encoder and text embedding dims differ");
  const auto train = dataset.split(Split::train);
  const auto captions = caption_embeddings(train, text);
  VisualEncoderParams params = VisualEncoderParams::random(encoder, config.seed);
  TrainConfig image_only = config;
  image_only.losses = {false, false, true};

  const DenseArray no_pool;
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    const auto scenes = sample_batch(train, config.batch_images, config.seed, iter);
    Batch batch;
    for (const Scene* s : scenes)
      batch.push_back({s->id, &s->image, {}, captions[index_of(train, s)]});
    Objective obj = compute_objective(params, batch, no_pool, image_only);
    if (log) log({iter, obj.report});
    sgd_step(params, obj.grads, config.lr);
  }
  return Checkpoint{std::move(params), "stage0", config.seed, config_digest, config.iterations};
}

Checkpoint pretrain_region_level(const TrainConfig& config, const Dataset& dataset, const Checkpoint& teacher,
                                 const ConceptPool& pool, const TextEncoder& text, const std::string& config_digest,
                                 const TrainLogger& log) {
  validate(config);
  validate(teacher.params);
  if (pool.size() == 0) throw EmptyPool("empty concept pool");
  if (pool.embeddings.extent(1) != teacher.params.config.embed_dim)
    throw BadConfig("pool embedding dim differs from the encoder");
  const auto train = dataset.split(Split::train);
  std::vector<DenseArray> captions;
  if (config.losses.image_contrastive) captions = caption_embeddings(train, text);

  VisualEncoderParams student = init_student_from_teacher(teacher.params);
  std::vector<DenseArray> teacher_maps(train.size());

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    const auto scenes = sample_batch(train, config.batch_images, config.seed, iter);
    Batch batch(scenes.size());
    parallel_for(scenes.size(), [&](std::size_t b) {
      const Scene& s = *scenes[b];
      const std::size_t idx = index_of(train, &s);
      if (teacher_maps[idx].size() == 0) teacher_maps[idx] = forward_image(teacher.params, s.image, false).fmap;
      const auto proposals = make_proposals(s, config.proposals, config.regions_per_image, config.jitter_sigma,
                                            config.random_proposals, mix_seed(mix_seed(config.seed, iter), s.id));
      auto labels = pseudo_label(teacher.params, teacher_maps[idx], s.id, proposals, pool.embeddings, config.tau);
      batch[b] = {s.id, &s.image, std::move(labels.pairs),
                  config.losses.image_contrastive ? captions[idx] : DenseArray()};
    });
    Objective obj = compute_objective(student, batch, pool.embeddings, config);
    if (log) log({iter, obj.report});
    sgd_step(student, obj.grads, config.lr);
  }
  return Checkpoint{std::move(student), "stage1", config.seed, config_digest, config.iterations};
}

}  // namespace regalign
