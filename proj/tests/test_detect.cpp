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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "regalign/detect.hpp"
#include "regalign/error.hpp"
#include "support.hpp"

using namespace regalign;
using namespace regalign::testing;

namespace {

DetectorHead basis_head(std::size_t k, std::size_t d, double tau = 0.01) {
  DetectorHead h;
  h.class_embeddings = DenseArray({k, d});
  for (std::size_t i = 0; i < k; ++i) {
    h.class_ids.push_back(10 + i);
    h.class_names.push_back("c" + std::to_string(i));
    h.class_embeddings[i * d + i] = 1.0;
  }
  h.tau = tau;
  return h;
}

DetectionResult det(Box b, std::size_t cls, double score) { return {0, b, cls, score}; }

}  // namespace

TEST_CASE("class_probabilities") {
  const auto head = basis_head(3, 4);
  DenseArray v({4});
  v[1] = 1.0;
  const auto logits = class_logits(v, head);
  CHECK(logits.size() == 4);
  CHECK(logits[1] == doctest::Approx(100.0));
  CHECK(logits[3] == 0.0);
  const auto p = class_probabilities(v, head);
  CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-15));
  // Three of the other logits are 0 (two classes and background).
  CHECK(p[0] == doctest::Approx(std::exp(-100.0)).epsilon(1e-9));

  DetectorHead twin = basis_head(2, 3);
  for (std::size_t k = 0; k < 3; ++k) twin.class_embeddings[3 + k] = twin.class_embeddings[k];
  const auto q = class_probabilities(random_unit(3, 2), twin);
  CHECK(q[0] == q[1]);

  for (int t = 0; t < 200; ++t) {
    DetectorHead h = basis_head(5, 6, 0.05);
    h.class_embeddings = random_unit_rows(5, 6, mix_seed(3, t));
    const auto x = random_unit(6, mix_seed(4, t));
    const auto pr = class_probabilities(x, h);
    double sum = 0.0;
    for (double y : pr.values()) sum += y;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    // Dropping background and renormalizing equals the class-only softmax.
    const auto lg = class_logits(x, h);
    DenseArray cls({5});
    for (std::size_t c = 0; c < 5; ++c) cls[c] = lg[c];
    const auto only = softmax_temp(cls, 1.0);
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(pr[c] / (1.0 - pr[5]) - only[c]) < 1e-12);
  }
}

TEST_CASE("fuse_objectness") {
  CHECK(fuse_objectness(1, 1) == 1.0);
  CHECK(fuse_objectness(0, 0.7) == 0.0);
  CHECK(fuse_objectness(0.25, 1) == 0.5);
  CHECK_THROWS_AS(fuse_objectness(1.5, 0.5), BadConfig);
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const double o = rng.uniform(0.01, 1), a = rng.uniform(0.01, 1), b = rng.uniform(0.01, 1);
    if (a < b) CHECK(fuse_objectness(o, a) < fuse_objectness(o, b));
    if (a < b) CHECK(fuse_objectness(a, o) < fuse_objectness(b, o));
  }
}

TEST_CASE("nms examples") {
  const Box b{0, 0, 10, 10};
  CHECK(nms({det(b, 0, 0.5)}, 0.9).size() == 1);
  const auto kept = nms({det(b, 0, 0.8), det(b, 0, 0.9)}, 0.9);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
  CHECK(nms({det(b, 0, 0.8), det(b, 1, 0.9)}, 0.9).size() == 2);
  CHECK(nms({det(b, 0, 0.8), det(b, 1, 0.9)}, 0.9, false).size() == 1);
  // Different scenes never suppress each other.
  auto other = det(b, 0, 0.8);
  other.scene_id = 1;
  CHECK(nms({det(b, 0, 0.9), other}, 0.5).size() == 2);
}

TEST_CASE("nms is a score-preserving idempotent subset") {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    std::vector<DetectionResult> dets;
    const auto n = 1 + rng.below(25);
    for (std::uint64_t i = 0; i < n; ++i) {
      const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
      dets.push_back(det(Box{x, y, x + rng.uniform(2, 12), y + rng.uniform(2, 12)}, rng.below(3),
                         double(rng.below(5) + 1) / 5));
    }
    const double thr = rng.uniform(0.1, 0.9);
    const auto once = nms(dets, thr);
    CHECK(nms(once, thr) == once);
    for (const auto& d : once) CHECK(std::find(dets.begin(), dets.end(), d) != dets.end());
    for (std::size_t i = 0; i < once.size(); ++i)
      for (std::size_t j = i + 1; j < once.size(); ++j)
        if (once[i].category_id == once[j].category_id) CHECK(iou(once[i].box, once[j].box) <= thr);
  }
}

TEST_CASE("focal_weight") {
  CHECK(focal_weight(0, 0.5) == 1.0);
  CHECK(focal_weight(0, 3.0) == 1.0);
  CHECK(focal_weight(1, 0.5) == 0.0);
  CHECK(focal_weight(0.75, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(focal_weight(0.3, 0.0) == 1.0);
  double prev = 2.0;
  for (int i = 0; i <= 100; ++i) {
    const double w = focal_weight(i / 100.0, 0.5);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    CHECK(w <= prev);
    prev = w;
  }
  CHECK_THROWS_AS(focal_weight(1.2, 0.5), BadConfig);
  CHECK_THROWS_AS(focal_weight(0.5, -1), BadConfig);
}

TEST_CASE("weighted_region_loss") {
  const auto logits = DenseArray::vector({2.0, -1.0, 0.5, 0.0});
  const auto p = softmax_temp(logits, 1.0);
  const auto plain = weighted_region_loss(logits, 0, 0.0, 0.2);
  CHECK(plain.value == doctest::Approx(-std::log(p[0])).epsilon(1e-14));
  const auto focal = weighted_region_loss(logits, 0, 0.5, 0.2);
  CHECK(focal.value == doctest::Approx(-std::sqrt(1 - p[0]) * std::log(p[0])).epsilon(1e-14));
  const auto bg = weighted_region_loss(logits, 3, 0.5, 0.2);
  CHECK(bg.value == doctest::Approx(-0.2 * std::log(p[3])).epsilon(1e-14));
  CHECK(weighted_region_loss(logits, 3, 0.5, 0.0).value == 0.0);
  for (double gamma : {0.0, 0.5, 2.0})
    for (std::size_t label : {std::size_t(0), std::size_t(2), std::size_t(3)}) {
      const auto r = weighted_region_loss(logits, label, gamma, 0.2);
      const std::vector<double> x(logits.values().begin(), logits.values().end());
      const auto num = numeric_gradient(x, [&](const std::vector<double>& z) {
        return weighted_region_loss(DenseArray::vector(z), label, gamma, 0.2).value;
      });
      CHECK(rel_error(std::vector<double>(r.dlogits.values().begin(), r.dlogits.values().end()), num) < 1e-7);
    }
}

TEST_CASE("finetune_loss_on_features gradient") {
  auto head = basis_head(3, 5, 0.1);
  head.class_embeddings = random_unit_rows(3, 5, 8);
  std::vector<DenseArray> feats;
  for (std::size_t i = 0; i < 4; ++i) feats.push_back(random_unit(5, 20 + i));
  const std::vector<std::size_t> labels{0, 3, kIgnoreLabel, 2};
  std::vector<DenseArray> g;
  finetune_loss_on_features(feats, labels, head, &g);
  std::vector<double> x, a;
  for (const auto& f : feats) x.insert(x.end(), f.values().begin(), f.values().end());
  for (std::size_t i = 0; i < 4; ++i) {
    if (g[i].size() == 0) {
      a.insert(a.end(), 5, 0.0);
    } else {
      a.insert(a.end(), g[i].values().begin(), g[i].values().end());
    }
  }
  const auto num = numeric_gradient(x, [&](const std::vector<double>& z) {
    std::vector<DenseArray> fs;
    for (std::size_t i = 0; i < 4; ++i)
      fs.push_back(DenseArray({5}, std::vector<double>(z.begin() + std::ptrdiff_t(5 * i),
                                                       z.begin() + std::ptrdiff_t(5 * i + 5))));
    return finetune_loss_on_features(fs, labels, head, nullptr);
  });
  CHECK(rel_error(a, num) < 1e-7);
  CHECK_THROWS_AS(finetune_loss_on_features(feats, {kIgnoreLabel, kIgnoreLabel, kIgnoreLabel, kIgnoreLabel}, head,
                                            nullptr),
                  EmptyBatch);
}

TEST_CASE("assign_region_label") {
  Scene s;
  s.image = DenseArray({64, 64, 3});
  s.objects = {{Box{0, 0, 20, 20}, 10, true}, {Box{40, 40, 60, 60}, 11, false}, {Box{30, 0, 50, 20}, 99, true}};
  const auto head = basis_head(3, 3);
  CHECK(assign_region_label(Box{0, 0, 20, 20}, s, head, 0.5, 0.4) == 0);
  CHECK(assign_region_label(Box{0, 0, 20, 12}, s, head, 0.5, 0.4) == 0);  // IoU 0.6
  CHECK(assign_region_label(Box{0, 0, 20, 9}, s, head, 0.5, 0.4) == kIgnoreLabel);  // IoU 0.45
  CHECK(assign_region_label(Box{0, 0, 20, 4}, s, head, 0.5, 0.4) == 3);
  // Unannotated objects and classes outside the head read as background.
  CHECK(assign_region_label(Box{40, 40, 60, 60}, s, head, 0.5, 0.4) == 3);
  CHECK(assign_region_label(Box{30, 0, 50, 20}, s, head, 0.5, 0.4) == 3);
}

TEST_CASE("zero_shot_detect on ground-truth proposals") {
  const auto params = VisualEncoderParams::random(small_encoder(), 3);
  Scene s;
  s.id = 2;
  s.image = random_image(32, 32, 4);
  s.objects = {{Box{2, 2, 14, 14}, 10, true}, {Box{16, 12, 30, 30}, 11, true}};
  auto head = basis_head(3, 8, 0.05);
  head.class_embeddings = random_unit_rows(3, 8, 5);
  ZeroShotOptions keep_all;
  keep_all.drop_background = false;
  const auto dets = zero_shot_detect(params, s, propose_ground_truth(s), head, keep_all);
  REQUIRE(dets.size() == 2);
  for (const auto& d : dets) {
    CHECK(d.scene_id == 2);
    const auto p = class_scores(params, s.image, d.box, head);
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if (p[c] > p[best]) best = c;
    CHECK(d.category_id == best);
    CHECK(d.score == doctest::Approx(std::sqrt(p[best])).epsilon(1e-12));
  }
  CHECK(zero_shot_detect(params, s, {}, head).empty());
}

TEST_CASE("draw and write detections") {
  const auto image = DenseArray({16, 16, 3});
  const auto head = basis_head(2, 2);
  std::vector<DetectionResult> dets{{0, Box{2, 2, 9, 9}, 1, 0.75}};
  const auto drawn = draw_detections(image, dets);
  CHECK(drawn.shape() == image.shape());
  CHECK(!(drawn == image));
  const auto dir = std::filesystem::temp_directory_path() / "regalign_det_test";
  std::filesystem::create_directories(dir);
  write_detections(dets, head, "cfg", "data", dir / "d.jsonl");
  std::ifstream in(dir / "d.jsonl");
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("\"c1\"") != std::string::npos);
  CHECK(line.find("\"cfg\"") != std::string::npos);
  std::filesystem::remove_all(dir);
}
