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
#include <set>

#include "regalign/alignment.hpp"
#include "regalign/error.hpp"
#include "support.hpp"

using namespace regalign;
using namespace regalign::testing;

namespace {

Scene two_object_scene() {
  Scene s;
  s.id = 4;
  s.image = random_image(64, 64, 1);
  s.objects.push_back({Box{4, 6, 20, 30}, 0, true});
  s.objects.push_back({Box{34, 30, 60, 50}, 3, true});
  return s;
}

DenseArray identity_pool(std::size_t c) {
  DenseArray pool({c, c});
  for (std::size_t i = 0; i < c; ++i) pool[i * c + i] = 1.0;
  return pool;
}

}  // namespace

TEST_CASE("propose_random") {
  const auto props = propose_random(7, 100, 64, 64);
  CHECK(props.size() == 100);
  for (const auto& p : props) {
    CHECK(p.box.valid());
    CHECK(p.box.x1 >= 0);
    CHECK(p.box.y1 >= 0);
    CHECK(p.box.x2 <= 64);
    CHECK(p.box.y2 <= 64);
    CHECK(std::min(p.box.width(), p.box.height()) >= 8 - 1e-9);
    CHECK(p.objectness == 1.0);
    CHECK(p.source == ProposalSource::random);
  }
  const auto again = propose_random(7, 100, 64, 64);
  for (std::size_t i = 0; i < props.size(); ++i) CHECK(props[i].box == again[i].box);
  RandomProposalConfig big;
  big.min_side = 65;
  CHECK_THROWS_AS(propose_random(7, 10, 64, 64, big), BadConfig);
  CHECK_THROWS_AS(propose_random(7, 0, 64, 64), BadConfig);
}

TEST_CASE("propose_oracle_rpn") {
  const auto scene = two_object_scene();
  const auto exact = propose_oracle_rpn(scene, 3, 20, 0.0);
  REQUIRE(exact.size() == 20);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(exact[i].box == scene.objects[i].box);
    CHECK(exact[i].objectness == 1.0);
    CHECK(iou(exact[i].box, scene.objects[i].box) == 1.0);
  }
  for (const auto& p : exact) {
    CHECK(p.objectness >= 0.05);
    CHECK(p.objectness <= 1.0);
    double best = 0.0;
    for (const auto& o : scene.objects) best = std::max(best, iou(p.box, o.box));
    CHECK(p.objectness == doctest::Approx(std::clamp(best, 0.05, 1.0)));
  }
  const auto jittered = propose_oracle_rpn(scene, 3, 20, 0.1);
  const auto again = propose_oracle_rpn(scene, 3, 20, 0.1);
  for (std::size_t i = 0; i < jittered.size(); ++i) CHECK(jittered[i].box == again[i].box);
  CHECK(!(jittered[0].box == scene.objects[0].box));

  Scene far = scene;
  far.objects = {{Box{0, 0, 6, 6}, 0, true}};
  bool saw_floor = false;
  for (const auto& p : propose_oracle_rpn(far, 9, 50, 0.0))
    if (iou(p.box, far.objects[0].box) == 0.0) {
      CHECK(p.objectness == 0.05);
      saw_floor = true;
    }
  CHECK(saw_floor);
}

TEST_CASE("propose_ground_truth") {
  const auto scene = two_object_scene();
  const auto gt = propose_ground_truth(scene);
  REQUIRE(gt.size() == 2);
  CHECK(gt[1].box == scene.objects[1].box);
  CHECK(gt[1].source == ProposalSource::ground_truth);
}

TEST_CASE("label_region on an identity pool") {
  const auto pool = identity_pool(5);
  for (std::size_t k = 0; k < 5; ++k) {
    DenseArray e({5});
    e[k] = 1.0;
    const auto pair = label_region(e, pool, 0.01);
    CHECK(pair.concept_id == k);
    CHECK(pair.teacher_score == 1.0);
  }
  // Ties go to the lowest id.
  const auto tie = label_region(l2_normalize(DenseArray::vector({0, 1, 0, 1, 0})), pool, 0.01);
  CHECK(tie.concept_id == 1);
}

TEST_CASE("label_region matches a brute-force argmax and is scale invariant") {
  for (int t = 0; t < 200; ++t) {
    const auto pool = random_unit_rows(4, 6, mix_seed(11, t));
    const auto v = random_unit(6, mix_seed(12, t));
    std::size_t best = 0;
    double best_s = -2.0;
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) s += v[k] * pool[j * 6 + k];
      if (s > best_s) best_s = s, best = j;
    }
    const auto pair = label_region(v, pool, 0.01);
    CHECK(pair.concept_id == best);
    double sum = 0.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      sum += pair.soft_target[j];
      if (pair.soft_target[j] > pair.soft_target[arg]) arg = j;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(arg == pair.concept_id);

    DenseArray v3 = v;
    for (auto& x : v3.values()) x *= 3.0;
    const auto scaled = label_region(v3, pool, 0.01);
    CHECK(scaled.concept_id == pair.concept_id);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(scaled.soft_target[j] - pair.soft_target[j]) < 1e-12);
    DenseArray pool2 = pool;
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 6; ++k) pool2[j * 6 + k] *= 0.5 + double(j);
    CHECK(label_region(v, pool2, 0.01).concept_id == pair.concept_id);
  }
}

TEST_CASE("pseudo_label uses the teacher and skips degenerate proposals") {
  const auto teacher = VisualEncoderParams::random(small_encoder(), 2);
  Scene scene = two_object_scene();
  scene.image = random_image(32, 32, 5);
  auto props = propose_random(4, 6, 32, 32);
  props.push_back({Box{5, 5, 5, 9}, 1.0, ProposalSource::random});
  ConceptPool pool;
  pool.embeddings = random_unit_rows(5, 8, 6);
  for (std::size_t j = 0; j < 5; ++j) pool.concepts.push_back({"c" + std::to_string(j), 1, j});
  const auto labels = pseudo_label(teacher, scene, props, pool, 0.01);
  CHECK(labels.pairs.size() == 6);
  CHECK(labels.skipped == 1);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& p = labels.pairs[i];
    CHECK(p.scene_id == scene.id);
    const auto v = region_feature(teacher, scene.image, props[i].box);
    const auto expect = label_region(v, pool.embeddings, 0.01);
    CHECK(p.concept_id == expect.concept_id);
    CHECK(p.teacher_score == doctest::Approx(expect.teacher_score).epsilon(1e-12));
  }
  ConceptPool empty;
  CHECK_THROWS_AS(pseudo_label(teacher, scene, props, empty, 0.01), EmptyPool);
  CHECK_THROWS_AS(pseudo_label(teacher, scene, props, pool, 0.0), NonPositiveTemperature);
}

TEST_CASE("collect_negatives") {
  CHECK(collect_negatives({2, 5, 2, 7}, 0) == std::vector<std::size_t>{5, 7});
  CHECK(collect_negatives({2, 5, 2, 7}, 1) == std::vector<std::size_t>{2, 7});
  CHECK(collect_negatives({3, 3, 3}, 1).empty());
  CHECK(collect_negatives({9}, 0).empty());
  Rng rng(13);
  for (int t = 0; t < 300; ++t) {
    std::vector<std::size_t> labels(1 + rng.below(10));
    for (auto& l : labels) l = rng.below(6);
    const std::size_t i = rng.below(labels.size());
    const auto neg = collect_negatives(labels, i);
    const std::set<std::size_t> all(labels.begin(), labels.end());
    CHECK(std::set<std::size_t>(neg.begin(), neg.end()).size() == neg.size());
    for (auto n : neg) {
      CHECK(n != labels[i]);
      CHECK(all.count(n) == 1);
    }
    CHECK(neg.size() == all.size() - 1);
  }
}

TEST_CASE("dump_pseudo_labels writes one line per pair") {
  const auto dir = std::filesystem::temp_directory_path() / "regalign_dump_test";
  std::filesystem::create_directories(dir);
  std::vector<RegionTextPair> pairs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    pairs[i].scene_id = i;
    pairs[i].box = Box{0, 0, 4, 4};
    pairs[i].soft_target = random_probs(i == 2 ? 40 : 4, i);
  }
  dump_pseudo_labels(pairs, dir / "pl.jsonl");
  std::ifstream in(dir / "pl.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  CHECK(n == 3);
  std::filesystem::remove_all(dir);
}
