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

namespace regalign {

/// Axis-aligned box in pixel coordinates, corners (x1, y1) and (x2, y2).
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept { return x1 < x2 && y1 < y2; }

  /// Intersect with [0, w] x [0, h].
  Box clipped(double w, double h) const noexcept;

  bool operator==(const Box&) const = default;
};

/// |a ∩ b| / |a ∪ b|, 0 when the union is empty.
double iou(const Box& a, const Box& b) noexcept;

}  // namespace regalign
