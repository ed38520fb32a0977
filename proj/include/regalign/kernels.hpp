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

namespace regalign::kernels {

// Dense row-batched linear layer kernels used by the patch encoder.
// Layout: X is rows x in, W is out x in, b is out, Y is rows x out, all
// row-major. Every reduction runs over its index in ascending order in both
// variants, so `serial` and `omp` produce bit-identical results at any
// thread count. `serial` is the reference kept for tests and benchmarks.

namespace serial {

/// Y = X W^T + b, optionally followed by ReLU.
void linear_forward(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
                    std::size_t out, bool relu, double* y);

/// dW += dY^T X, db += column sums of dY.
void linear_backward_params(const double* dy, const double* x, std::size_t rows, std::size_t in, std::size_t out,
                            double* dw, double* db);

/// dX = dY W; when `relu_out` is non-null, entries where relu_out <= 0 are zeroed.
void linear_backward_input(const double* dy, const double* w, std::size_t rows, std::size_t in, std::size_t out,
                           const double* relu_out, double* dx);

}  // namespace serial

namespace omp {

void linear_forward(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
                    std::size_t out, bool relu, double* y);
void linear_backward_params(const double* dy, const double* x, std::size_t rows, std::size_t in, std::size_t out,
                            double* dw, double* db);
void linear_backward_input(const double* dy, const double* w, std::size_t rows, std::size_t in, std::size_t out,
                           const double* relu_out, double* dx);

}  // namespace omp

/// Caps OpenMP worker count; 1 keeps everything on the calling thread.
void set_threads(int n);
int threads();
/// True while executing inside an OpenMP parallel region.
bool in_parallel();

}  // namespace regalign::kernels
