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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "regalign/encoders.hpp"
#include "regalign/error.hpp"
#include "regalign/kernels.hpp"
#include "roi_oracle.hpp"
#include "support.hpp"

using namespace regalign;
using namespace regalign::testing;

TEST_CASE("encode_image shapes and zero input") {
  auto params = VisualEncoderParams::random(small_encoder(), 1);
  const auto fmap = encode_image(params, random_image(32, 32, 2));
  CHECK(fmap.shape() == std::vector<std::size_t>{8, 4, 4});
  CHECK_THROWS_AS(encode_image(params, random_image(30, 32, 2)), BadShape);

  for (auto& l : params.patch_layers) l.bias.fill(0.0);
  const auto zero = encode_image(params, DenseArray({32, 32, 3}));
  for (double x : zero.values()) CHECK(x == 0.0);
}

TEST_CASE("extract_patches layout") {
  DenseArray img({4, 4, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = double(i);
  const auto p = extract_patches(img, 2);
  CHECK(p.shape() == std::vector<std::size_t>{4, 12});
  // patch (gy=0, gx=1), pixel (py=1, px=0), channel 2 -> image (y=1, x=2)
  CHECK(p[1 * 12 + (1 * 2 + 0) * 3 + 2] == img[(1 * 4 + 2) * 3 + 2]);
  // patch (gy=1, gx=0), pixel (0, 1), channel 0 -> image (y=2, x=1)
  CHECK(p[2 * 12 + (0 * 2 + 1) * 3 + 0] == img[(2 * 4 + 1) * 3 + 0]);
}

TEST_CASE("roi_align constant and ramp maps are exact") {
  DenseArray constant({2, 5, 7}, 3.25);
  DenseArray ramp({1, 6, 6});
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) ramp[y * 6 + x] = double(x);
  Rng rng(17);
  for (std::size_t samples : {std::size_t(0), std::size_t(2)}) {
    for (int t = 0; t < 100; ++t) {
      const double x1 = rng.uniform(-4, 40), y1 = rng.uniform(-4, 40);
      const Box b{x1, y1, x1 + rng.uniform(1, 30), y1 + rng.uniform(1, 30)};
      const auto out = roi_align(constant, b, 3, 1.0 / 8, samples);
      for (double v : out.values()) CHECK(std::abs(v - 3.25) < 1e-12);
    }
    // Boxes whose bins stay inside [0, W-1] reproduce the ramp exactly.
    for (int t = 0; t < 100; ++t) {
      const double x1 = rng.uniform(4.0, 20.0);
      const Box b{x1, 8, x1 + rng.uniform(1, 20), 30};
      const auto out = roi_align(ramp, b, 2, 1.0 / 8, samples);
      const double fx1 = x1 / 8 - 0.5, bw = (b.x2 - x1) / 8 / 2;
      for (std::size_t bx = 0; bx < 2; ++bx) {
        const double centre = fx1 + (double(bx) + 0.5) * bw;
        CHECK(std::abs(out[bx] - centre) < 1e-9);
        CHECK(std::abs(out[2 + bx] - centre) < 1e-9);
      }
    }
  }
  // A sample point at feature-x 1.5 interpolates to 1.5.
  CHECK(bilinear_sample(ramp, 0, 1.5, 2.0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("roi_align matches the oversampled oracle") {
  Rng rng(23);
  for (int t = 0; t < 30; ++t) {
    const auto fmap = random_array({1, 6, 6}, mix_seed(5, t));
    const double x1 = rng.uniform(-8, 40), y1 = rng.uniform(-8, 40);
    const Box b{x1, y1, x1 + rng.uniform(2, 30), y1 + rng.uniform(2, 30)};
    const auto expect = roi_oracle(fmap, b, 2, 1.0 / 8, 64);
    const auto exact = roi_align(fmap, b, 2, 1.0 / 8, 0);
    for (std::size_t i = 0; i < exact.size(); ++i) CHECK(std::abs(exact[i] - expect[i]) < 1e-3);
    // The sampled variant equals the oracle run with its own sample count.
    const auto sampled = roi_align(fmap, b, 2, 1.0 / 8, 2);
    const auto expect2 = roi_oracle(fmap, b, 2, 1.0 / 8, 2);
    for (std::size_t i = 0; i < sampled.size(); ++i) CHECK(std::abs(sampled[i] - expect2[i]) < 1e-12);
  }
}

TEST_CASE("roi_align is linear in the feature map") {
  Rng rng(29);
  for (int t = 0; t < 50; ++t) {
    const auto f = random_array({3, 5, 5}, mix_seed(6, t));
    const auto g = random_array({3, 5, 5}, mix_seed(7, t));
    const double a = rng.uniform(-3, 3), c = rng.uniform(-3, 3);
    DenseArray mix = f;
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * f[i] + c * g[i];
    const Box b{rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(21, 40), rng.uniform(21, 40)};
    const auto lhs = roi_align(mix, b, 2, 1.0 / 8, 0);
    const auto rf = roi_align(f, b, 2, 1.0 / 8, 0), rg = roi_align(g, b, 2, 1.0 / 8, 0);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * rf[i] + c * rg[i])) < 1e-9);
  }
}

TEST_CASE("roi_align rejects degenerate boxes") {
  DenseArray fmap({1, 4, 4}, 1.0);
  CHECK_THROWS_AS(roi_align(fmap, Box{3, 3, 3, 10}, 2, 1.0 / 8), DegenerateBox);
  CHECK_THROWS_AS(roi_align(fmap, Box{3, 3, 10, 3 + 1e-6}, 2, 1.0 / 8), DegenerateBox);
}

TEST_CASE("roi_align_backward is the adjoint of roi_align") {
  Rng rng(31);
  for (int t = 0; t < 30; ++t) {
    const auto f = random_array({2, 4, 5}, mix_seed(8, t));
    const auto up = random_array({2, 3, 3}, mix_seed(9, t));
    const Box b{rng.uniform(-5, 20), rng.uniform(-5, 20), rng.uniform(21, 45), rng.uniform(21, 45)};
    for (std::size_t samples : {std::size_t(0), std::size_t(2)}) {
      const auto plan = plan_roi(b, 4, 5, 3, 1.0 / 8, samples);
      DenseArray df(f.shape());
      roi_align_backward(plan, up, df);
      CHECK(dot(apply_roi_plan(f, plan).values(), up.values()) ==
            doctest::Approx(dot(f.values(), df.values())).epsilon(1e-12));
    }
  }
}

TEST_CASE("region_feature gradient matches finite differences") {
  const auto params = VisualEncoderParams::random(small_encoder(), 3);
  const auto image = random_image(32, 32, 4);
  const auto w = random_array({8}, 5);
  const Box box{3.5, 5.0, 27.0, 22.5};
  auto f = [&](const VisualEncoderParams& p) { return dot(region_feature(p, image, box).values(), w.values()); };

  auto grads = VisualEncoderParams::zeros_like(params);
  const auto img = forward_image(params, image);
  const auto reg = forward_region(params, img.fmap, box);
  DenseArray dfmap(img.fmap.shape());
  backward_region(params, reg, w, grads, dfmap);
  backward_image(params, img, dfmap, grads);
  CHECK(rel_error(flatten(grads), numeric_gradient(params, f)) < 1e-6);
}

TEST_CASE("feature direction is invariant to scaling the last patch layer") {
  auto params = VisualEncoderParams::random(small_encoder(), 6);
  params.head.bias.fill(0.0);
  params.patch_layers.back().bias.fill(0.0);
  const auto image = random_image(32, 32, 7);
  const Box box{1, 2, 30, 29};
  const auto v = region_feature(params, image, box);
  auto scaled = params;
  for (auto& x : scaled.patch_layers.back().weight.values()) x *= 7.5;
  const auto u = region_feature(scaled, image, box);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(u[i] - v[i]) < 1e-9);
}

TEST_CASE("student initialization copies and isolates") {
  const auto teacher = VisualEncoderParams::random(small_encoder(), 8);
  const auto digest = teacher.digest();
  auto student = init_student_from_teacher(teacher);
  const auto image = random_image(32, 32, 9);
  CHECK(region_feature(student, image, global_box(image)) == region_feature(teacher, image, global_box(image)));
  student.head.weight[0] += 1.0;
  CHECK(teacher.digest() == digest);
  CHECK(student.digest() != digest);
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  const std::size_t rows = 37, in = 29, out = 13;
  const auto x = random_array({rows, in}, 1), w = random_array({out, in}, 2), b = random_array({out}, 3);
  const auto dy = random_array({rows, out}, 4);
  for (int threads : {1, 2, 4}) {
    kernels::set_threads(threads);
    for (bool relu : {false, true}) {
      DenseArray ys({rows, out}), yp({rows, out});
      kernels::serial::linear_forward(x.data(), rows, in, w.data(), b.data(), out, relu, ys.data());
      kernels::omp::linear_forward(x.data(), rows, in, w.data(), b.data(), out, relu, yp.data());
      CHECK(ys == yp);
    }
    DenseArray dws({out, in}), dbs({out}), dwp({out, in}), dbp({out});
    kernels::serial::linear_backward_params(dy.data(), x.data(), rows, in, out, dws.data(), dbs.data());
    kernels::omp::linear_backward_params(dy.data(), x.data(), rows, in, out, dwp.data(), dbp.data());
    CHECK(dws == dwp);
    CHECK(dbs == dbp);
    DenseArray dxs({rows, in}), dxp({rows, in});
    kernels::serial::linear_backward_input(dy.data(), w.data(), rows, in, out, x.data(), dxs.data());
    kernels::omp::linear_backward_input(dy.data(), w.data(), rows, in, out, x.data(), dxp.data());
    CHECK(dxs == dxp);
  }
  kernels::set_threads(1);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "regalign_ckpt_test";
  std::filesystem::create_directories(dir);
  EncoderConfig cfg = small_encoder();
  cfg.depth = 2;
  const Checkpoint ckpt{VisualEncoderParams::random(cfg, 10), "stage0", 42, "abc123", 17};
  const auto path = dir / "a.ckpt";
  save_checkpoint(ckpt, path);
  CHECK(load_checkpoint(path) == ckpt);

  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::vector<char>& b) {
    std::ofstream out(path, std::ios::binary);
    out.write(b.data(), std::streamsize(b.size()));
  };
  SUBCASE("flipped byte") {
    auto b = bytes;
    b[b.size() / 2] ^= 0x10;
    write(b);
    CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
  }
  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    write(b);
    CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
  }
  SUBCASE("truncated") {
    write(std::vector<char>(bytes.begin(), bytes.begin() + std::ptrdiff_t(bytes.size() / 3)));
    CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(dir / "nope.ckpt"), IoError); }
  std::filesystem::remove_all(dir);
}
