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

#include "regalign/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "regalign/error.hpp"
#include "regalign/parallel.hpp"

namespace regalign {

using nlohmann::json;

const char* to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::novel:
      return "novel";
    case EvalMode::base:
      return "base";
    case EvalMode::generalized:
      return "generalized";
  }
  return "?";
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "novel") return EvalMode::novel;
  if (name == "base") return EvalMode::base;
  if (name == "generalized" || name == "all") return EvalMode::generalized;
  throw BadConfig("unknown split mode \"" + name + "\"");
}

const char* to_string(Interpolation interp) { return interp == Interpolation::coco101 ? "coco101" : "all_point"; }

Interpolation parse_interpolation(const std::string& name) {
  if (name == "all_point") return Interpolation::all_point;
  if (name == "coco101") return Interpolation::coco101;
  throw BadConfig("unknown interpolation \"" + name + "\"");
}

std::vector<std::size_t> eval_class_ids(const Dataset& dataset, EvalMode mode) {
  switch (mode) {
    case EvalMode::novel:
      return dataset.novel_ids;
    case EvalMode::base:
      return dataset.base_ids;
    case EvalMode::generalized: {
      std::vector<std::size_t> all(dataset.vocabulary.size());
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
  }
  return {};
}

std::vector<bool> match_detections(const std::vector<Box>& dets, const std::vector<Box>& gts, double iou_thr) {
  std::vector<bool> used(gts.size(), false), tp(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(dets[i], gts[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best >= iou_thr) {
      used[best_g] = true;
      tp[i] = true;
    }
  }
  return tp;
}

double average_precision(const std::vector<bool>& tp, std::size_t n_gt, Interpolation interp) {
  if (n_gt == 0) throw NoGroundTruth("average precision needs at least one ground-truth box");
  const std::size_t n = tp.size();
  std::vector<double> recall(n), precision(n);
  std::size_t ctp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp[i]) ++ctp;
    recall[i] = double(ctp) / double(n_gt);
    precision[i] = double(ctp) / double(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  if (interp == Interpolation::coco101) {
    double sum = 0.0;
    std::size_t j = 0;
    for (int k = 0; k <= 100; ++k) {
      const double r = k / 100.0;
      while (j < n && recall[j] < r) ++j;
      if (j < n) sum += precision[j];
    }
    return sum / 101.0;
  }
  double ap = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!tp[i]) continue;
    ap += (recall[i] - prev) * precision[i];
    prev = recall[i];
  }
  return ap;
}

namespace {

struct GtIndex {
  // scene id -> boxes of one category
  std::unordered_map<std::size_t, std::vector<Box>> boxes;
  std::size_t count = 0;
};

std::vector<bool> match_category(const std::vector<const Detection*>& dets, const GtIndex& gts, double thr) {
  std::unordered_map<std::size_t, std::vector<bool>> used;
  std::vector<bool> tp(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto it = gts.boxes.find(dets[i]->scene_id);
    if (it == gts.boxes.end()) continue;
    auto& u = used[dets[i]->scene_id];
    u.resize(it->second.size(), false);
    double best = -1.0;
    std::size_t best_g = u.size();
    for (std::size_t g = 0; g < u.size(); ++g) {
      if (u[g]) continue;
      const double v = iou(dets[i]->box, it->second[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < u.size() && best >= thr) {
      u[best_g] = true;
      tp[i] = true;
    }
  }
  return tp;
}

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

MetricsReport evaluate(const std::vector<Detection>& detections, const Dataset& dataset, EvalMode mode,
                       const EvalOptions& options) {
  const auto classes = eval_class_ids(dataset, mode);
  std::vector<std::size_t> slot(dataset.vocabulary.size(), classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) slot[classes[k]] = k;

  std::vector<std::vector<const Detection*>> per_class(classes.size());
  for (const auto& d : detections) {
    if (d.category_id >= slot.size() || slot[d.category_id] == classes.size())
      throw UnknownCategory("detection category " + std::to_string(d.category_id) + " is not scored in " +
                            to_string(mode) + " mode");
    per_class[slot[d.category_id]].push_back(&d);
  }
  std::vector<GtIndex> gts(classes.size());
  for (const Scene* s : dataset.split(Split::eval))
    for (const auto& o : s->objects) {
      if (slot[o.concept_id] == classes.size()) continue;
      auto& g = gts[slot[o.concept_id]];
      g.boxes[s->id].push_back(o.box);
      ++g.count;
    }

  std::vector<CategoryMetrics> metrics(classes.size());
  parallel_for(classes.size(), [&](std::size_t k) {
    auto& dets = per_class[k];
    std::stable_sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
    CategoryMetrics& m = metrics[k];
    m.name = dataset.vocabulary.name(classes[k]);
    m.n_gt = gts[k].count;
    m.n_det = dets.size();
    m.novel = dataset.is_novel(classes[k]);
    if (m.n_gt == 0) return;
    m.ap50 = average_precision(match_category(dets, gts[k], 0.5), m.n_gt, options.interpolation);
    for (double t : options.iou_sweep)
      m.ap_by_iou[threshold_key(t)] = average_precision(match_category(dets, gts[k], t), m.n_gt, options.interpolation);
  });

  MetricsReport report;
  report.mode = mode;
  report.dataset_digest = dataset.digest();
  std::vector<double> novel, base, all, sweep;
  for (auto& m : metrics) {
    if (m.ap50) {
      (m.novel ? novel : base).push_back(*m.ap50);
      all.push_back(*m.ap50);
      for (const auto& [key, ap] : m.ap_by_iou) sweep.push_back(ap);
    }
    report.per_category.emplace(m.name, std::move(m));
  }
  report.novel_ap50 = mean_of(novel);
  report.base_ap50 = mean_of(base);
  report.all_ap50 = mean_of(all);
  if (!options.iou_sweep.empty()) report.map_sweep = mean_of(sweep);
  return report;
}

std::string metrics_json(const MetricsReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json per = json::object();
  for (const auto& [name, m] : report.per_category) {
    json c = {{"ap50", opt(m.ap50)}, {"n_gt", m.n_gt}, {"n_det", m.n_det}, {"novel", m.novel}};
    if (!m.ap_by_iou.empty()) c["ap_by_iou"] = m.ap_by_iou;
    per[name] = c;
  }
  json j = {{"per_category", per},
            {"novel_ap50", opt(report.novel_ap50)},
            {"base_ap50", opt(report.base_ap50)},
            {"all_ap50", opt(report.all_ap50)},
            {"mode", to_string(report.mode)},
            {"dataset_digest", report.dataset_digest}};
  if (report.map_sweep) j["map_sweep"] = *report.map_sweep;
  return j.dump();
}

std::vector<Detection> read_detections(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < vocab.size(); ++i) ids.emplace(vocab.name(i), i);
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Detection d;
    std::string category;
    try {
      const json j = json::parse(line);
      d.scene_id = j.at("scene_id").get<std::size_t>();
      const auto b = j.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw CorruptFile(path.string() + ":" + std::to_string(lineno) + ": box needs 4 numbers");
      d.box = Box{b[0], b[1], b[2], b[3]};
      category = j.at("category").get<std::string>();
      d.score = j.at("score").get<double>();
      d.config_digest = j.value("config_digest", "");
      d.dataset_digest = j.value("dataset_digest", "");
    } catch (const json::exception& e) {
      throw CorruptFile(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const auto it = ids.find(category);
    if (it == ids.end()) throw UnknownCategory("unknown category \"" + category + "\" in " + path.string());
    d.category_id = it->second;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace regalign
