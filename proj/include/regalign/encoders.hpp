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
#include <utility>
#include <vector>

#include "regalign/box.hpp"
#include "regalign/numerics.hpp"

namespace regalign {

struct EncoderConfig {
  std::size_t patch_size = 8;
  std::size_t hidden = 64;
  /// Number of hidden ReLU layers in the per-patch MLP (1..3).
  std::size_t depth = 1;
  std::size_t embed_dim = 64;
  /// RoIAlign output resolution P (region pooled to P x P x d).
  std::size_t pooled = 2;
  /// Samples per bin axis; 0 integrates the bilinear field exactly.
  std::size_t samples_per_bin = 0;

  bool operator==(const EncoderConfig&) const = default;
};

struct Linear {
  DenseArray weight;  // out x in
  DenseArray bias;    // out

  bool operator==(const Linear&) const = default;
};

/// Trainable visual encoder: a per-patch MLP producing a d-channel feature
/// map, followed by RoIAlign and a linear head over the pooled grid.
/// The same struct doubles as the gradient container.
struct VisualEncoderParams {
  EncoderConfig config;
  std::vector<Linear> patch_layers;  // depth hidden layers, then hidden -> d
  Linear head;                       // (P*P*d) -> d

  static VisualEncoderParams random(const EncoderConfig& config, std::uint64_t seed);
  /// Zero-filled arrays with the shapes of `like`.
  static VisualEncoderParams zeros_like(const VisualEncoderParams& like);

  std::vector<DenseArray*> arrays();
  std::vector<const DenseArray*> arrays() const;
  std::vector<std::string> array_names() const;
  std::size_t parameter_count() const;
  std::uint64_t digest() const;
  bool all_finite() const;

  bool operator==(const VisualEncoderParams&) const = default;
};

void validate(const VisualEncoderParams& params);

/// Cached activations of one image pass, kept for the backward pass.
struct ImageActivations {
  std::size_t grid_h = 0, grid_w = 0;
  std::vector<DenseArray> layer_inputs;  // patches, then each post-ReLU hidden
  DenseArray fmap;                       // d x grid_h x grid_w
};

/// Flattens H x W x 3 into (grid_h*grid_w) x (p*p*3) patches, (py, px, c) order.
DenseArray extract_patches(const DenseArray& image, std::size_t patch_size);

/// Feature map d x H/p x W/p. Throws BadShape when H or W is not a multiple of p.
DenseArray encode_image(const VisualEncoderParams& params, const DenseArray& image);
ImageActivations forward_image(const VisualEncoderParams& params, const DenseArray& image, bool parallel = false);
/// Accumulates parameter gradients for an upstream gradient on the feature map.
void backward_image(const VisualEncoderParams& params, const ImageActivations& act, const DenseArray& dfmap,
                    VisualEncoderParams& grads, bool parallel = false);

/// Per-axis interpolation weights of one RoIAlign call: for every output
/// bin, a list of (feature index, weight) pairs summing to 1.
struct RoiPlan {
  std::size_t pooled = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> x_bins, y_bins;
};

/// Bilinear value of channel `c` at feature coordinates (x, y), clamped to
/// the border.
double bilinear_sample(const DenseArray& fmap, std::size_t c, double x, double y);

/// Maps `box` to feature coordinates (c -> c * scale - 0.5) and builds the
/// bin weights. Throws DegenerateBox when the mapped extent is <= 1e-6.
RoiPlan plan_roi(const Box& box, std::size_t fmap_h, std::size_t fmap_w, std::size_t pooled, double spatial_scale,
                 std::size_t samples_per_bin);

/// d x P x P pooled features.
DenseArray roi_align(const DenseArray& fmap, const Box& box, std::size_t pooled, double spatial_scale,
                     std::size_t samples_per_bin = 0);
DenseArray apply_roi_plan(const DenseArray& fmap, const RoiPlan& plan);
/// Scatters `dpooled` (d x P x P) into `dfmap`.
void roi_align_backward(const RoiPlan& plan, const DenseArray& dpooled, DenseArray& dfmap);

struct RegionActivations {
  RoiPlan plan;
  DenseArray pooled;  // d x P x P
  DenseArray z;       // pre-normalization head output
  double norm = 0.0;
  DenseArray v;  // unit-norm region feature
};

RegionActivations forward_region(const VisualEncoderParams& params, const DenseArray& fmap, const Box& box);
/// Given dL/dv, accumulates head gradients and adds dL/dfmap into `dfmap`.
void backward_region(const VisualEncoderParams& params, const RegionActivations& act, const DenseArray& dv,
                     VisualEncoderParams& grads, DenseArray& dfmap);

/// encode_image -> roi_align -> head -> l2_normalize.
DenseArray region_feature(const VisualEncoderParams& params, const DenseArray& image, const Box& box);
/// Box covering the whole image; its region feature is the image feature.
Box global_box(const DenseArray& image);

/// Deep copy; the student never aliases teacher storage.
VisualEncoderParams init_student_from_teacher(const VisualEncoderParams& teacher);

struct Checkpoint {
  VisualEncoderParams params;
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::size_t iterations = 0;

  bool operator==(const Checkpoint&) const = default;
};

/// Binary container: "RALN1", u64 metadata length, JSON metadata, then per
/// array (u32 rank, u64 extents, raw little-endian doubles), then a u64
/// FNV-1a digest of all preceding bytes.
struct TensorFile {
  std::string metadata;  // JSON text
  std::vector<DenseArray> arrays;
};

std::vector<unsigned char> encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(const std::vector<unsigned char>& bytes, const std::string& origin);
void write_tensor_file(const TensorFile& file, const std::filesystem::path& path);
TensorFile read_tensor_file(const std::filesystem::path& path);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace regalign
