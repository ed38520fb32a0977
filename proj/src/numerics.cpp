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

#include "regalign/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "regalign/error.hpp"

namespace regalign {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_vector(const DenseArray& a, const char* what) {
  if (a.rank() != 1) throw BadShape(std::string(what) + " must be 1-D");
}

}  // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  for (auto e : shape_)
    if (e == 0) throw BadShape("zero extent");
}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_)
    if (e == 0) throw BadShape("zero extent");
  if (product(shape_) != data_.size())
    throw ShapeMismatch("shape product " + std::to_string(product(shape_)) + " vs " +
                        std::to_string(data_.size()) + " values");
}

DenseArray DenseArray::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

DenseArray DenseArray::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return DenseArray({n}, std::move(values));
}

std::span<double> DenseArray::row(std::size_t r) {
  const std::size_t cols = shape_.at(1);
  return std::span<double>(data_).subspan(r * cols, cols);
}

std::span<const double> DenseArray::row(std::size_t r) const {
  const std::size_t cols = shape_.at(1);
  return std::span<const double>(data_).subspan(r * cols, cols);
}

void DenseArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeMismatch("dot of lengths " + std::to_string(a.size()) +
                                                " and " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

DenseArray l2_normalize(const DenseArray& v) {
  require_vector(v, "l2_normalize input");
  const double n = l2_norm(v.values());
  if (n < 1e-12) throw ZeroVector("norm " + std::to_string(n));
  DenseArray out = v;
  for (auto& x : out.values()) x /= n;
  return out;
}

double cosine_similarity(const DenseArray& v, const DenseArray& l) {
  require_vector(v, "cosine lhs");
  require_vector(l, "cosine rhs");
  if (v.size() != l.size()) throw ShapeMismatch("cosine of unequal lengths");
  const double nv = l2_norm(v.values());
  const double nl = l2_norm(l.values());
  if (nv < 1e-12 || nl < 1e-12) throw ZeroVector("cosine of a zero vector");
  const double c = dot(v.values(), l.values()) / (nv * nl);
  return std::clamp(c, -1.0, 1.0);
}

DenseArray softmax_temp(const DenseArray& scores, double tau) {
  require_vector(scores, "softmax scores");
  if (!(tau > 0.0)) throw NonPositiveTemperature("tau = " + std::to_string(tau));
  const auto s = scores.values();
  const double mx = *std::max_element(s.begin(), s.end());
  DenseArray out(scores.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = std::exp((s[i] - mx) / tau);
    total += out[i];
  }
  for (auto& x : out.values()) x /= total;
  return out;
}

GradPair kl_divergence(const DenseArray& p_teacher, const DenseArray& p_student) {
  require_vector(p_teacher, "teacher distribution");
  require_vector(p_student, "student distribution");
  if (p_teacher.size() != p_student.size()) throw ShapeMismatch("KL of unequal lengths");
  auto check = [](const DenseArray& p, const char* who) {
    double s = 0.0;
    for (double x : p.values()) {
      if (x < 0.0 || !std::isfinite(x)) throw NotADistribution(std::string(who) + " has a negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6) throw NotADistribution(std::string(who) + " sums to " + std::to_string(s));
  };
  check(p_teacher, "teacher");
  check(p_student, "student");

  GradPair out;
  DenseArray g(p_student.shape());
  double value = 0.0;
  for (std::size_t i = 0; i < p_teacher.size(); ++i) {
    const double pt = p_teacher[i];
    const double ps = p_student[i];
    if (pt > 0.0) value += pt * (std::log(pt) - std::log(std::max(ps, 1e-300)));
    g[i] = ps - pt;
  }
  out.value = std::max(value, 0.0);
  out.grad.push_back(std::move(g));
  return out;
}

void axpy(double alpha, const DenseArray& src, DenseArray& dst) {
  if (src.size() != dst.size()) throw ShapeMismatch("axpy size mismatch");
  const double* s = src.data();
  double* d = dst.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += alpha * s[i];
}

}  // namespace regalign
