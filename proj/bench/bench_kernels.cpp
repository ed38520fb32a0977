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

// Serial reference vs OpenMP kernels on encoder-sized linear layers, plus a
// full image forward/backward pass.

#include <benchmark/benchmark.h>

#include <vector>

#include "regalign/encoders.hpp"
#include "regalign/kernels.hpp"
#include "regalign/util.hpp"

using namespace regalign;

namespace {

struct Layer {
  std::size_t rows, in, out;
  std::vector<double> x, w, b, y, dy, dw, db, dx;

  explicit Layer(const benchmark::State& state)
      : rows(std::size_t(state.range(0))), in(std::size_t(state.range(1))), out(std::size_t(state.range(2))) {
    Rng rng(1);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (auto& e : v) e = rng.uniform(-1, 1);
    };
    fill(x, rows * in);
    fill(w, out * in);
    fill(b, out);
    fill(dy, rows * out);
    y.resize(rows * out);
    dw.resize(out * in);
    db.resize(out);
    dx.resize(rows * in);
  }
};

void configure(benchmark::State& state, bool parallel) {
  kernels::set_threads(parallel ? int(state.range(3)) : 1);
}

void counters(benchmark::State& state, const Layer& l) {
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(l.rows * l.in * l.out));
}

template <bool Parallel>
void BM_LinearForward(benchmark::State& state) {
  Layer l(state);
  configure(state, Parallel);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::omp::linear_forward(l.x.data(), l.rows, l.in, l.w.data(), l.b.data(), l.out, true, l.y.data());
    else
      kernels::serial::linear_forward(l.x.data(), l.rows, l.in, l.w.data(), l.b.data(), l.out, true, l.y.data());
    benchmark::DoNotOptimize(l.y.data());
  }
  counters(state, l);
}

template <bool Parallel>
void BM_LinearBackward(benchmark::State& state) {
  Layer l(state);
  configure(state, Parallel);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::linear_backward_params(l.dy.data(), l.x.data(), l.rows, l.in, l.out, l.dw.data(), l.db.data());
      kernels::omp::linear_backward_input(l.dy.data(), l.w.data(), l.rows, l.in, l.out, nullptr, l.dx.data());
    } else {
      kernels::serial::linear_backward_params(l.dy.data(), l.x.data(), l.rows, l.in, l.out, l.dw.data(),
                                              l.db.data());
      kernels::serial::linear_backward_input(l.dy.data(), l.w.data(), l.rows, l.in, l.out, nullptr, l.dx.data());
    }
    benchmark::DoNotOptimize(l.dw.data());
    benchmark::DoNotOptimize(l.dx.data());
  }
  counters(state, l);
}

void BM_ImagePass(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  kernels::set_threads(parallel ? int(state.range(1)) : 1);
  EncoderConfig c;
  c.patch_size = 4;
  c.pooled = 4;
  const auto params = VisualEncoderParams::random(c, 3);
  DenseArray image({64, 64, 3});
  Rng rng(2);
  for (auto& v : image.values()) v = rng.uniform();
  auto grads = VisualEncoderParams::zeros_like(params);
  for (auto _ : state) {
    const auto act = forward_image(params, image, parallel);
    backward_image(params, act, act.fmap, grads, parallel);
    benchmark::DoNotOptimize(grads.head.bias.data());
  }
}

// rows = patches of a 64px image at patch 4 and 8; in/out = encoder widths.
void shapes(benchmark::internal::Benchmark* b) {
  for (int threads : {1, 2, 4})
    for (auto [rows, in, out] : {std::tuple{256, 48, 64}, std::tuple{256, 64, 64}, std::tuple{64, 192, 64},
                                 std::tuple{8192, 64, 64}})
      b->Args({rows, in, out, threads});
}

}  // namespace

BENCHMARK(BM_LinearForward<false>)->Apply(shapes);
BENCHMARK(BM_LinearForward<true>)->Apply(shapes);
BENCHMARK(BM_LinearBackward<false>)->Apply(shapes);
BENCHMARK(BM_LinearBackward<true>)->Apply(shapes);
BENCHMARK(BM_ImagePass)->Args({0, 1})->Args({1, 1})->Args({1, 2})->Args({1, 4});

BENCHMARK_MAIN();
