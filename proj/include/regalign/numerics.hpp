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
#include <initializer_list>
#include <span>
#include <vector>

namespace regalign {

/// Shape-tagged row-major array of doubles. Carrier for images, feature
/// maps, embeddings and gradients.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0);
  DenseArray(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseArray vector(std::initializer_list<double> values);
  static DenseArray vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Row `r` of a rank-2 array.
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }

  bool operator==(const DenseArray& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// A scalar value with one gradient array per differentiable input.
struct GradPair {
  double value = 0.0;
  std::vector<DenseArray> grad;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Throws ZeroVector when the norm is below 1e-12.
DenseArray l2_normalize(const DenseArray& v);

/// Matching score between two vectors: cosine of the angle between them.
double cosine_similarity(const DenseArray& v, const DenseArray& l);

/// softmax(scores / tau) with max-subtraction.
DenseArray softmax_temp(const DenseArray& scores, double tau);

/// KL(p_teacher || p_student) = sum p_t (ln p_t - ln p_s) with 0 ln 0 := 0.
/// The gradient is taken with respect to the student's pre-softmax logits u
/// (p_student = softmax(u)) and equals p_student - p_teacher. Callers that
/// feed scores through a temperature multiply by 1/tau themselves.
GradPair kl_divergence(const DenseArray& p_teacher, const DenseArray& p_student);

/// In-place `dst += alpha * src`; shapes must agree.
void axpy(double alpha, const DenseArray& src, DenseArray& dst);

}  // namespace regalign
