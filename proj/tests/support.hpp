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

#include <cmath>
#include <functional>
#include <vector>

#include "regalign/alignment.hpp"
#include "regalign/encoders.hpp"
#include "regalign/numerics.hpp"
#include "regalign/train.hpp"
#include "regalign/util.hpp"

namespace regalign::testing {

inline DenseArray random_array(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  DenseArray a(std::move(shape));
  Rng rng(seed);
  for (auto& v : a.values()) v = rng.uniform(lo, hi);
  return a;
}

inline DenseArray random_unit(std::size_t d, std::uint64_t seed) {
  DenseArray v({d});
  Rng rng(seed);
  for (auto& x : v.values()) x = rng.normal();
  return l2_normalize(v);
}

/// C x d matrix of unit rows.
inline DenseArray random_unit_rows(std::size_t c, std::size_t d, std::uint64_t seed) {
  DenseArray m({c, d});
  for (std::size_t i = 0; i < c; ++i) {
    const DenseArray r = random_unit(d, mix_seed(seed, i));
    for (std::size_t k = 0; k < d; ++k) m[i * d + k] = r[k];
  }
  return m;
}

inline DenseArray random_probs(std::size_t n, std::uint64_t seed) {
  DenseArray p({n});
  Rng rng(seed);
  double s = 0.0;
  for (auto& x : p.values()) s += (x = rng.uniform() + 1e-3);
  for (auto& x : p.values()) x /= s;
  return p;
}

/// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline std::vector<double> flatten(const VisualEncoderParams& p) {
  std::vector<double> out;
  for (const auto* a : p.arrays()) out.insert(out.end(), a->values().begin(), a->values().end());
  return out;
}

/// Central differences of `f` over every parameter.
inline std::vector<double> numeric_gradient(VisualEncoderParams params,
                                            const std::function<double(const VisualEncoderParams&)>& f,
                                            double eps = 1e-5) {
  std::vector<double> out;
  for (auto* a : params.arrays()) {
    for (auto& w : a->values()) {
      const double keep = w;
      w = keep + eps;
      const double up = f(params);
      w = keep - eps;
      const double down = f(params);
      w = keep;
      out.push_back((up - down) / (2 * eps));
    }
  }
  return out;
}

/// Central differences of a function of one flat vector.
inline std::vector<double> numeric_gradient(std::vector<double> x, const std::function<double(const std::vector<double>&)>& f,
                                            double eps = 1e-5) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double down = f(x);
    x[i] = keep;
    out[i] = (up - down) / (2 * eps);
  }
  return out;
}

/// Encoder at the gradient-check scale: d = 8, patch 8, 2x2 pooling.
inline EncoderConfig small_encoder() {
  EncoderConfig c;
  c.patch_size = 8;
  c.hidden = 6;
  c.depth = 1;
  c.embed_dim = 8;
  c.pooled = 2;
  return c;
}

inline DenseArray random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  return random_array({h, w, 3}, seed, 0.0, 1.0);
}

/// Small batch for gradient checks: 32x32 images, `regions` random boxes
/// per image pseudo-labeled by `labeler` against a C-concept random pool.
struct CheckBatch {
  std::vector<DenseArray> images;
  std::vector<DenseArray> captions;
  DenseArray pool;
  Batch batch;
};

inline CheckBatch make_check_batch(const VisualEncoderParams& labeler, std::size_t n_images, std::size_t regions,
                                   std::size_t concepts, double tau, std::uint64_t seed) {
  CheckBatch out;
  const std::size_t d = labeler.config.embed_dim;
  out.pool = random_unit_rows(concepts, d, mix_seed(seed, 1));
  for (std::size_t i = 0; i < n_images; ++i) {
    out.images.push_back(random_image(32, 32, mix_seed(seed, 100 + i)));
    out.captions.push_back(random_unit(d, mix_seed(seed, 200 + i)));
  }
  for (std::size_t i = 0; i < n_images; ++i) {
    BatchImage b;
    b.scene_id = i;
    b.image = &out.images[i];
    b.caption_embedding = out.captions[i];
    const auto props = propose_random(mix_seed(seed, 300 + i), regions, 32, 32);
    const auto fmap = encode_image(labeler, out.images[i]);
    b.regions = pseudo_label(labeler, fmap, i, props, out.pool, tau).pairs;
    out.batch.push_back(std::move(b));
  }
  return out;
}

}  // namespace regalign::testing
