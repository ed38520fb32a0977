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

#include "regalign/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "regalign/error.hpp"
#include "regalign/kernels.hpp"
#include "regalign/util.hpp"

namespace regalign {

// ---------------------------------------------------------------------------
// Parameters

namespace {

Linear make_linear(std::size_t out, std::size_t in, double stddev, Rng* rng) {
  Linear l{DenseArray({out, in}), DenseArray({out})};
  if (rng != nullptr)
    for (auto& w : l.weight.values()) w = rng->normal() * stddev;
  return l;
}

void check_config(const EncoderConfig& c) {
  if (c.patch_size == 0 || c.hidden == 0 || c.embed_dim == 0 || c.pooled == 0)
    throw BadConfig("encoder sizes must be positive");
  if (c.depth < 1 || c.depth > 3) throw BadConfig("encoder depth must be in 1..3");
}

VisualEncoderParams build(const EncoderConfig& c, Rng* rng) {
  check_config(c);
  VisualEncoderParams p;
  p.config = c;
  std::size_t in = c.patch_size * c.patch_size * 3;
  for (std::size_t l = 0; l < c.depth; ++l) {
    p.patch_layers.push_back(make_linear(c.hidden, in, std::sqrt(2.0 / double(in)), rng));
    in = c.hidden;
  }
  p.patch_layers.push_back(make_linear(c.embed_dim, in, std::sqrt(1.0 / double(in)), rng));
  const std::size_t head_in = c.pooled * c.pooled * c.embed_dim;
  p.head = make_linear(c.embed_dim, head_in, std::sqrt(1.0 / double(head_in)), rng);
  return p;
}

}  // namespace

VisualEncoderParams VisualEncoderParams::random(const EncoderConfig& config, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7153));
  return build(config, &rng);
}

VisualEncoderParams VisualEncoderParams::zeros_like(const VisualEncoderParams& like) {
  return build(like.config, nullptr);
}

std::vector<DenseArray*> VisualEncoderParams::arrays() {
  std::vector<DenseArray*> out;
  for (auto& l : patch_layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&head.weight);
  out.push_back(&head.bias);
  return out;
}

std::vector<const DenseArray*> VisualEncoderParams::arrays() const {
  auto mut = const_cast<VisualEncoderParams*>(this)->arrays();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> VisualEncoderParams::array_names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < patch_layers.size(); ++l) {
    out.push_back("patch" + std::to_string(l) + ".weight");
    out.push_back("patch" + std::to_string(l) + ".bias");
  }
  out.push_back("head.weight");
  out.push_back("head.bias");
  return out;
}

std::size_t VisualEncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* a : arrays()) n += a->size();
  return n;
}

std::uint64_t VisualEncoderParams::digest() const {
  std::uint64_t h = kFnvOffset;
  for (const auto* a : arrays())
    h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(a->data()),
                                             a->size() * sizeof(double)),
              h);
  return h;
}

bool VisualEncoderParams::all_finite() const {
  for (const auto* a : arrays())
    if (!a->all_finite()) return false;
  return true;
}

void validate(const VisualEncoderParams& params) {
  const auto reference = VisualEncoderParams::zeros_like(params);
  const auto a = params.arrays();
  const auto b = reference.arrays();
  if (a.size() != b.size()) throw BadShape("encoder has the wrong number of layers");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i]->same_shape(*b[i])) throw BadShape("encoder array " + std::to_string(i) + " has the wrong shape");
  if (!params.all_finite()) throw BadShape("encoder parameters are not finite");
}

VisualEncoderParams init_student_from_teacher(const VisualEncoderParams& teacher) {
  VisualEncoderParams student = teacher;
  return student;
}

// ---------------------------------------------------------------------------
// Patch encoder

DenseArray extract_patches(const DenseArray& image, std::size_t p) {
  if (image.rank() != 3 || image.extent(2) != 3) throw BadShape("image must be H x W x 3");
  const std::size_t h = image.extent(0), w = image.extent(1);
  if (p == 0 || h % p != 0 || w % p != 0)
    throw BadShape("image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                   std::to_string(p));
  const std::size_t gh = h / p, gw = w / p, dim = p * p * 3;
  DenseArray patches({gh * gw, dim});
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx) {
      double* dst = patches.data() + (gy * gw + gx) * dim;
      for (std::size_t py = 0; py < p; ++py) {
        const double* src = image.data() + ((gy * p + py) * w + gx * p) * 3;
        std::memcpy(dst + py * p * 3, src, p * 3 * sizeof(double));
      }
    }
  return patches;
}

ImageActivations forward_image(const VisualEncoderParams& params, const DenseArray& image, bool parallel) {
  const std::size_t p = params.config.patch_size;
  ImageActivations act;
  act.layer_inputs.push_back(extract_patches(image, p));
  act.grid_h = image.extent(0) / p;
  act.grid_w = image.extent(1) / p;
  const std::size_t rows = act.grid_h * act.grid_w;
  const auto linear = parallel ? kernels::omp::linear_forward : kernels::serial::linear_forward;

  DenseArray out;
  for (std::size_t l = 0; l < params.patch_layers.size(); ++l) {
    const auto& layer = params.patch_layers[l];
    const DenseArray& x = act.layer_inputs.back();
    if (x.extent(1) != layer.weight.extent(1)) throw BadShape("patch dimension does not match the encoder");
    const bool last = l + 1 == params.patch_layers.size();
    DenseArray y({rows, layer.weight.extent(0)});
    linear(x.data(), rows, x.extent(1), layer.weight.data(), layer.bias.data(), layer.weight.extent(0), !last,
           y.data());
    if (last)
      out = std::move(y);
    else
      act.layer_inputs.push_back(std::move(y));
  }

  const std::size_t d = out.extent(1);
  act.fmap = DenseArray({d, act.grid_h, act.grid_w});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) act.fmap[c * rows + r] = out[r * d + c];
  return act;
}

DenseArray encode_image(const VisualEncoderParams& params, const DenseArray& image) {
  return forward_image(params, image, !kernels::in_parallel()).fmap;
}

void backward_image(const VisualEncoderParams& params, const ImageActivations& act, const DenseArray& dfmap,
                    VisualEncoderParams& grads, bool parallel) {
  const std::size_t rows = act.grid_h * act.grid_w;
  const std::size_t d = params.config.embed_dim;
  if (!dfmap.same_shape(act.fmap)) throw ShapeMismatch("feature map gradient shape");
  const auto bwd_params = parallel ? kernels::omp::linear_backward_params : kernels::serial::linear_backward_params;
  const auto bwd_input = parallel ? kernels::omp::linear_backward_input : kernels::serial::linear_backward_input;

  DenseArray dy({rows, d});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) dy[r * d + c] = dfmap[c * rows + r];

  for (std::size_t l = params.patch_layers.size(); l-- > 0;) {
    const auto& layer = params.patch_layers[l];
    auto& g = grads.patch_layers[l];
    const DenseArray& x = act.layer_inputs[l];
    const std::size_t in = x.extent(1), out = layer.weight.extent(0);
    bwd_params(dy.data(), x.data(), rows, in, out, g.weight.data(), g.bias.data());
    if (l == 0) break;
    DenseArray dx({rows, in});
    bwd_input(dy.data(), layer.weight.data(), rows, in, out, x.data(), dx.data());
    dy = std::move(dx);
  }
}

// ---------------------------------------------------------------------------
// RoIAlign

double bilinear_sample(const DenseArray& fmap, std::size_t c, double x, double y) {
  const std::size_t h = fmap.extent(1), w = fmap.extent(2);
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double lx = x - double(x0), ly = y - double(y0);
  const double* f = fmap.data() + c * h * w;
  return (1 - ly) * ((1 - lx) * f[y0 * w + x0] + lx * f[y0 * w + x1]) +
         ly * ((1 - lx) * f[y1 * w + x0] + lx * f[y1 * w + x1]);
}

namespace {

using Weights = std::vector<std::pair<std::size_t, double>>;

/// Integral of the unit hat centred at i over (-inf, x].
double hat_antiderivative(double x, double i) {
  if (x <= i - 1) return 0.0;
  if (x <= i) return 0.5 * (x - i + 1) * (x - i + 1);
  if (x <= i + 1) return 1.0 - 0.5 * (i + 1 - x) * (i + 1 - x);
  return 1.0;
}

/// Mean over [a, b] of the border-clamped linear interpolation weights.
Weights exact_weights(double a, double b, std::size_t n) {
  const double len = b - a;
  std::vector<double> acc(n, 0.0);
  const double top = double(n - 1);
  if (n == 1) return {{0, 1.0}};
  if (a < 0.0) acc[0] += std::min(b, 0.0) - a;
  if (b > top) acc[n - 1] += b - std::max(a, top);
  const double lo = std::clamp(a, 0.0, top), hi = std::clamp(b, 0.0, top);
  if (hi > lo) {
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(lo) - 1));
    const auto last = std::min(n - 1, static_cast<std::size_t>(std::ceil(hi) + 1));
    for (std::size_t i = first; i <= last; ++i)
      acc[i] += hat_antiderivative(hi, double(i)) - hat_antiderivative(lo, double(i));
  }
  Weights out;
  for (std::size_t i = 0; i < n; ++i)
    if (acc[i] != 0.0) out.emplace_back(i, acc[i] / len);
  return out;
}

Weights sampled_weights(double a, double b, std::size_t n, std::size_t samples) {
  std::vector<double> acc(n, 0.0);
  const double step = (b - a) / double(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double x = std::clamp(a + (double(k) + 0.5) * step, 0.0, double(n - 1));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t x1 = std::min(x0 + 1, n - 1);
    const double lx = x - double(x0);
    acc[x0] += (1.0 - lx) / double(samples);
    acc[x1] += lx / double(samples);
  }
  Weights out;
  for (std::size_t i = 0; i < n; ++i)
    if (acc[i] != 0.0) out.emplace_back(i, acc[i]);
  return out;
}

}  // namespace

RoiPlan plan_roi(const Box& box, std::size_t fmap_h, std::size_t fmap_w, std::size_t pooled, double spatial_scale,
                 std::size_t samples_per_bin) {
  if (pooled == 0) throw BadConfig("pooled resolution must be positive");
  const double x1 = box.x1 * spatial_scale - 0.5, x2 = box.x2 * spatial_scale - 0.5;
  const double y1 = box.y1 * spatial_scale - 0.5, y2 = box.y2 * spatial_scale - 0.5;
  if (!(x2 - x1 > 1e-6) || !(y2 - y1 > 1e-6))
    throw DegenerateBox("mapped extent " + std::to_string(x2 - x1) + " x " + std::to_string(y2 - y1));
  RoiPlan plan;
  plan.pooled = pooled;
  const double bw = (x2 - x1) / double(pooled), bh = (y2 - y1) / double(pooled);
  for (std::size_t b = 0; b < pooled; ++b) {
    const double xa = x1 + double(b) * bw, xb = xa + bw;
    const double ya = y1 + double(b) * bh, yb = ya + bh;
    if (samples_per_bin == 0) {
      plan.x_bins.push_back(exact_weights(xa, xb, fmap_w));
      plan.y_bins.push_back(exact_weights(ya, yb, fmap_h));
    } else {
      plan.x_bins.push_back(sampled_weights(xa, xb, fmap_w, samples_per_bin));
      plan.y_bins.push_back(sampled_weights(ya, yb, fmap_h, samples_per_bin));
    }
  }
  return plan;
}

DenseArray apply_roi_plan(const DenseArray& fmap, const RoiPlan& plan) {
  const std::size_t d = fmap.extent(0), h = fmap.extent(1), w = fmap.extent(2), p = plan.pooled;
  DenseArray out({d, p, p});
  for (std::size_t c = 0; c < d; ++c) {
    const double* f = fmap.data() + c * h * w;
    for (std::size_t by = 0; by < p; ++by)
      for (std::size_t bx = 0; bx < p; ++bx) {
        double s = 0.0;
        for (const auto& [j, wy] : plan.y_bins[by]) {
          double row = 0.0;
          for (const auto& [i, wx] : plan.x_bins[bx]) row += wx * f[j * w + i];
          s += wy * row;
        }
        out[(c * p + by) * p + bx] = s;
      }
  }
  return out;
}

DenseArray roi_align(const DenseArray& fmap, const Box& box, std::size_t pooled, double spatial_scale,
                     std::size_t samples_per_bin) {
  if (fmap.rank() != 3) throw BadShape("feature map must be d x H x W");
  return apply_roi_plan(fmap, plan_roi(box, fmap.extent(1), fmap.extent(2), pooled, spatial_scale, samples_per_bin));
}

void roi_align_backward(const RoiPlan& plan, const DenseArray& dpooled, DenseArray& dfmap) {
  const std::size_t d = dfmap.extent(0), h = dfmap.extent(1), w = dfmap.extent(2), p = plan.pooled;
  for (std::size_t c = 0; c < d; ++c) {
    double* f = dfmap.data() + c * h * w;
    for (std::size_t by = 0; by < p; ++by)
      for (std::size_t bx = 0; bx < p; ++bx) {
        const double g = dpooled[(c * p + by) * p + bx];
        if (g == 0.0) continue;
        for (const auto& [j, wy] : plan.y_bins[by])
          for (const auto& [i, wx] : plan.x_bins[bx]) f[j * w + i] += g * wy * wx;
      }
  }
}

// ---------------------------------------------------------------------------
// Region features

RegionActivations forward_region(const VisualEncoderParams& params, const DenseArray& fmap, const Box& box) {
  const auto& c = params.config;
  RegionActivations act;
  act.plan = plan_roi(box, fmap.extent(1), fmap.extent(2), c.pooled, 1.0 / double(c.patch_size), c.samples_per_bin);
  act.pooled = apply_roi_plan(fmap, act.plan);
  const auto& head = params.head;
  const std::size_t out = head.weight.extent(0), in = head.weight.extent(1);
  if (act.pooled.size() != in) throw BadShape("pooled size does not match the head");
  act.z = DenseArray({out});
  kernels::serial::linear_forward(act.pooled.data(), 1, in, head.weight.data(), head.bias.data(), out, false,
                                  act.z.data());
  act.norm = l2_norm(act.z.values());
  if (act.norm < 1e-12) throw ZeroVector("region feature vanished before normalization");
  act.v = act.z;
  for (auto& x : act.v.values()) x /= act.norm;
  return act;
}

void backward_region(const VisualEncoderParams& params, const RegionActivations& act, const DenseArray& dv,
                     VisualEncoderParams& grads, DenseArray& dfmap) {
  const std::size_t out = params.head.weight.extent(0), in = params.head.weight.extent(1);
  const double proj = dot(act.v.values(), dv.values());
  DenseArray dz({out});
  for (std::size_t k = 0; k < out; ++k) dz[k] = (dv[k] - act.v[k] * proj) / act.norm;
  kernels::serial::linear_backward_params(dz.data(), act.pooled.data(), 1, in, out, grads.head.weight.data(),
                                          grads.head.bias.data());
  DenseArray dpooled(act.pooled.shape());
  kernels::serial::linear_backward_input(dz.data(), params.head.weight.data(), 1, in, out, nullptr,
                                         dpooled.data());
  roi_align_backward(act.plan, dpooled, dfmap);
}

Box global_box(const DenseArray& image) { return Box{0, 0, double(image.extent(1)), double(image.extent(0))}; }

DenseArray region_feature(const VisualEncoderParams& params, const DenseArray& image, const Box& box) {
  return forward_region(params, encode_image(params, image), box).v;
}

}  // namespace regalign
