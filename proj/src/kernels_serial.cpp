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

#include "regalign/kernels.hpp"

namespace regalign::kernels::serial {

void linear_forward(const double* x, std::size_t rows, std::size_t in, const double* w, const double* b,
                    std::size_t out, bool relu, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += wo[i] * xr[i];
      y[r * out + o] = relu && s < 0.0 ? 0.0 : s;
    }
  }
}

void linear_backward_params(const double* dy, const double* x, std::size_t rows, std::size_t in, std::size_t out,
                            double* dw, double* db) {
  for (std::size_t o = 0; o < out; ++o) {
    double* dwo = dw + o * in;
    double sb = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double g = dy[r * out + o];
      sb += g;
      if (g == 0.0) continue;
      const double* xr = x + r * in;
      for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
    }
    db[o] += sb;
  }
}

void linear_backward_input(const double* dy, const double* w, std::size_t rows, std::size_t in, std::size_t out,
                           const double* relu_out, double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* dxr = dx + r * in;
    for (std::size_t i = 0; i < in; ++i) dxr[i] = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[r * out + o];
      if (g == 0.0) continue;
      const double* wo = w + o * in;
      for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
    }
    if (relu_out != nullptr)
      for (std::size_t i = 0; i < in; ++i)
        if (relu_out[r * in + i] <= 0.0) dxr[i] = 0.0;
  }
}

}  // namespace regalign::kernels::serial
