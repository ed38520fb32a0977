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

#include "regalign/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "regalign/error.hpp"
#include "regalign/util.hpp"

namespace regalign {

using nlohmann::json;

namespace {

// Fields that follow from others rather than being read from JSON.
void derive(RunConfig& c) {
  c.data.seed = c.seed;
  c.text.embed_dim = c.model.embed_dim;
  c.pretrain_image.tau = c.tau;
  c.pretrain_image.seed = mix_seed(c.seed, 0x57a9e0);
  c.pretrain_region.tau = c.tau;
  c.pretrain_region.seed = mix_seed(c.seed, 0x57a9e1);
  c.finetune.seed = mix_seed(c.seed, 0x57a9e2);
}

}  // namespace

RunConfig::RunConfig() {
  model.patch_size = 4;
  model.pooled = 4;
  pretrain_image.iterations = 1000;
  pretrain_image.batch_images = 32;
  pretrain_image.losses = {false, false, true};
  pretrain_region.iterations = 2000;
  pretrain_region.losses = {true, true, true};
  derive(*this);
}

namespace {

json train_json(const TrainConfig& t, bool region) {
  json j = {{"lr", t.lr},
            {"batch_images", t.batch_images},
            {"iterations", t.iterations},
            {"symmetric_image_loss", t.symmetric_image_loss}};
  if (region) {
    j["regions_per_image"] = t.regions_per_image;
    j["proposals"] = to_string(t.proposals);
    j["jitter_sigma"] = t.jitter_sigma;
    j["losses"] = {{"contrastive", t.losses.contrastive},
                   {"distillation", t.losses.distillation},
                   {"image_contrastive", t.losses.image_contrastive}};
    j["weights"] = {{"contrastive", t.weights.contrastive},
                    {"distillation", t.weights.distillation},
                    {"image_contrastive", t.weights.image_contrastive}};
    j["random_proposals"] = {{"min_side", t.random_proposals.min_side},
                             {"min_aspect", t.random_proposals.min_aspect},
                             {"max_aspect", t.random_proposals.max_aspect}};
  }
  return j;
}

json to_json(const RunConfig& c) {
  const auto& d = c.data;
  const auto& l = d.layout;
  json j;
  j["seed"] = c.seed;
  j["tau"] = c.tau;
  j["out"] = c.out;
  j["data"] = {{"colors", d.colors},
               {"shapes", d.shapes},
               {"n_train", d.n_train},
               {"n_eval", d.n_eval},
               {"novel_fraction", d.novel_fraction},
               {"base_only", d.base_only},
               {"image_size", l.image_size},
               {"max_objects", l.max_objects},
               {"min_object_size", l.min_object_size},
               {"max_object_size", l.max_object_size},
               {"overlap_cap", l.overlap_cap},
               {"caption_ratio", l.caption_ratio},
               {"noise_amplitude", l.noise_amplitude}};
  j["pool"] = {{"min_freq", c.pool.min_freq}, {"templates", c.pool.templates}, {"lexicon", c.pool.lexicon}};
  j["text"] = {{"buckets", c.text.n_buckets}, {"seed", c.text.seed}};
  j["model"] = {{"patch_size", c.model.patch_size}, {"hidden", c.model.hidden},
                {"depth", c.model.depth},           {"embed_dim", c.model.embed_dim},
                {"pooled", c.model.pooled},         {"samples_per_bin", c.model.samples_per_bin}};
  j["pretrain_image"] = train_json(c.pretrain_image, false);
  j["pretrain_region"] = train_json(c.pretrain_region, true);
  const auto& f = c.finetune;
  j["finetune"] = {{"lr", f.lr},
                   {"iterations", f.iterations},
                   {"batch_images", f.batch_images},
                   {"regions_per_image", f.regions_per_image},
                   {"fg_iou", f.fg_iou},
                   {"bg_iou", f.bg_iou},
                   {"jitter_sigma", f.jitter_sigma},
                   {"gamma", c.head.gamma},
                   {"background_weight", c.head.background_weight}};
  j["detect"] = {{"proposals", to_string(c.detect.proposals)},
                 {"regions_per_image", c.detect.regions_per_image},
                 {"jitter_sigma", c.detect.jitter_sigma},
                 {"nms", c.detect.options.nms_threshold},
                 {"drop_background", c.detect.options.drop_background},
                 {"classwise_nms", c.detect.options.classwise_nms}};
  j["eval"] = {{"iou_sweep", c.eval.iou_sweep}, {"interpolation", to_string(c.eval.interpolation)}};
  j["log_every"] = c.log_every;
  return j;
}

std::string kind_of(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "unsigned";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_unsigned()) return v.is_number_unsigned();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
    return std::all_of(v.begin(), v.end(), [&](const json& e) { return compatible(def.front(), e); });
  }
  return false;
}

void merge_value(json& base, const json& defaults, const json& v, const std::string& path) {
  if (defaults.is_object()) {
    if (!v.is_object()) throw BadConfig(path + ": expected an object");
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string key = path.empty() ? it.key() : path + "." + it.key();
      if (!defaults.contains(it.key())) throw BadConfig("unknown key \"" + key + "\"");
      merge_value(base[it.key()], defaults.at(it.key()), it.value(), key);
    }
    return;
  }
  if (!compatible(defaults, v))
    throw BadConfig(path + ": expected " + kind_of(defaults) + ", got " + kind_of(v) + " (" + v.dump() + ")");
  base = v;
}

void apply_override(json& base, const json& defaults, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw BadConfig("override \"" + text + "\" must look like key=value");
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json nested = value;
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) nested = json{{*it, nested}};
  merge_value(base, defaults, nested, "");
}

template <class T>
T field(const json& j, const std::string& section, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw BadConfig((section.empty() ? "" : section + ".") + key + ": invalid value");
  }
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw BadConfig(key + " " + what);
}

TrainConfig train_from_json(const json& j, const std::string& s, TrainConfig t, bool region) {
  t.lr = field<double>(j, s, "lr");
  t.batch_images = field<std::size_t>(j, s, "batch_images");
  t.iterations = field<std::size_t>(j, s, "iterations");
  t.symmetric_image_loss = field<bool>(j, s, "symmetric_image_loss");
  require(t.lr > 0, s + ".lr", "must be > 0");
  require(t.batch_images >= 1, s + ".batch_images", "must be >= 1");
  if (region) {
    t.regions_per_image = field<std::size_t>(j, s, "regions_per_image");
    t.proposals = parse_proposal_source(field<std::string>(j, s, "proposals"));
    t.jitter_sigma = field<double>(j, s, "jitter_sigma");
    const json& l = j.at("losses");
    t.losses.contrastive = field<bool>(l, s + ".losses", "contrastive");
    t.losses.distillation = field<bool>(l, s + ".losses", "distillation");
    t.losses.image_contrastive = field<bool>(l, s + ".losses", "image_contrastive");
    const json& w = j.at("weights");
    t.weights.contrastive = field<double>(w, s + ".weights", "contrastive");
    t.weights.distillation = field<double>(w, s + ".weights", "distillation");
    t.weights.image_contrastive = field<double>(w, s + ".weights", "image_contrastive");
    const json& r = j.at("random_proposals");
    t.random_proposals.min_side = field<double>(r, s + ".random_proposals", "min_side");
    t.random_proposals.min_aspect = field<double>(r, s + ".random_proposals", "min_aspect");
    t.random_proposals.max_aspect = field<double>(r, s + ".random_proposals", "max_aspect");
    require(t.regions_per_image >= 1, s + ".regions_per_image", "must be >= 1");
    require(t.jitter_sigma >= 0, s + ".jitter_sigma", "must be >= 0");
    require(t.random_proposals.min_side >= 2, s + ".random_proposals.min_side", "must be >= 2");
  }
  try {
    validate(t);
  } catch (const BadConfig& e) {
    throw BadConfig(s + ": " + e.what());
  }
  return t;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = field<std::uint64_t>(j, "", "seed");
  c.tau = field<double>(j, "", "tau");
  require(c.tau > 0, "tau", "must be > 0");
  c.out = field<std::string>(j, "", "out");
  c.log_every = field<std::size_t>(j, "", "log_every");
  require(c.log_every >= 1, "log_every", "must be >= 1");

  const json& d = j.at("data");
  c.data.colors = field<std::vector<std::string>>(d, "data", "colors");
  c.data.shapes = field<std::vector<std::string>>(d, "data", "shapes");
  c.data.n_train = field<std::size_t>(d, "data", "n_train");
  c.data.n_eval = field<std::size_t>(d, "data", "n_eval");
  c.data.novel_fraction = field<double>(d, "data", "novel_fraction");
  c.data.base_only = field<bool>(d, "data", "base_only");
  auto& l = c.data.layout;
  l.image_size = field<std::size_t>(d, "data", "image_size");
  l.max_objects = field<std::size_t>(d, "data", "max_objects");
  l.min_object_size = field<double>(d, "data", "min_object_size");
  l.max_object_size = field<double>(d, "data", "max_object_size");
  l.overlap_cap = field<double>(d, "data", "overlap_cap");
  l.caption_ratio = field<double>(d, "data", "caption_ratio");
  l.noise_amplitude = field<double>(d, "data", "noise_amplitude");
  require(c.data.n_train >= 1, "data.n_train", "must be >= 1");
  require(c.data.n_eval >= 1, "data.n_eval", "must be >= 1");
  require(c.data.novel_fraction >= 0 && c.data.novel_fraction < 1, "data.novel_fraction", "must lie in [0, 1)");
  require(l.max_objects >= 1, "data.max_objects", "must be >= 1");
  require(l.min_object_size > 0 && l.min_object_size <= l.max_object_size, "data.min_object_size",
          "must lie in (0, max_object_size]");
  require(l.max_object_size <= double(l.image_size), "data.max_object_size", "must fit in the image");
  require(l.caption_ratio >= 0 && l.caption_ratio <= 1, "data.caption_ratio", "must lie in [0, 1]");

  const json& p = j.at("pool");
  c.pool.min_freq = field<std::size_t>(p, "pool", "min_freq");
  c.pool.templates = field<std::vector<std::string>>(p, "pool", "templates");
  c.pool.lexicon = field<std::string>(p, "pool", "lexicon");
  require(c.pool.min_freq >= 1, "pool.min_freq", "must be >= 1");
  require(!c.pool.templates.empty(), "pool.templates", "must not be empty");

  const json& m = j.at("model");
  c.model.patch_size = field<std::size_t>(m, "model", "patch_size");
  c.model.hidden = field<std::size_t>(m, "model", "hidden");
  c.model.depth = field<std::size_t>(m, "model", "depth");
  c.model.embed_dim = field<std::size_t>(m, "model", "embed_dim");
  c.model.pooled = field<std::size_t>(m, "model", "pooled");
  c.model.samples_per_bin = field<std::size_t>(m, "model", "samples_per_bin");
  require(c.model.patch_size >= 1 && l.image_size % c.model.patch_size == 0, "model.patch_size",
          "must divide data.image_size");
  require(c.model.depth >= 1 && c.model.depth <= 3, "model.depth", "must lie in [1, 3]");
  require(c.model.hidden >= 1 && c.model.embed_dim >= 1 && c.model.pooled >= 1, "model", "sizes must be >= 1");

  const json& t = j.at("text");
  c.text.n_buckets = field<std::size_t>(t, "text", "buckets");
  c.text.seed = field<std::uint64_t>(t, "text", "seed");
  require(c.text.n_buckets >= 1, "text.buckets", "must be >= 1");

  c.pretrain_image = train_from_json(j.at("pretrain_image"), "pretrain_image", c.pretrain_image, false);
  c.pretrain_region = train_from_json(j.at("pretrain_region"), "pretrain_region", c.pretrain_region, true);

  const json& f = j.at("finetune");
  c.finetune.lr = field<double>(f, "finetune", "lr");
  c.finetune.iterations = field<std::size_t>(f, "finetune", "iterations");
  c.finetune.batch_images = field<std::size_t>(f, "finetune", "batch_images");
  c.finetune.regions_per_image = field<std::size_t>(f, "finetune", "regions_per_image");
  c.finetune.fg_iou = field<double>(f, "finetune", "fg_iou");
  c.finetune.bg_iou = field<double>(f, "finetune", "bg_iou");
  c.finetune.jitter_sigma = field<double>(f, "finetune", "jitter_sigma");
  c.head.gamma = field<double>(f, "finetune", "gamma");
  c.head.background_weight = field<double>(f, "finetune", "background_weight");
  require(c.head.gamma >= 0, "finetune.gamma", "must be >= 0");
  require(c.head.background_weight >= 0, "finetune.background_weight", "must be >= 0");
  try {
    validate(c.finetune);
  } catch (const BadConfig& e) {
    throw BadConfig(std::string("finetune: ") + e.what());
  }

  const json& dt = j.at("detect");
  c.detect.proposals = parse_proposal_source(field<std::string>(dt, "detect", "proposals"));
  c.detect.regions_per_image = field<std::size_t>(dt, "detect", "regions_per_image");
  c.detect.jitter_sigma = field<double>(dt, "detect", "jitter_sigma");
  c.detect.options.nms_threshold = field<double>(dt, "detect", "nms");
  c.detect.options.drop_background = field<bool>(dt, "detect", "drop_background");
  c.detect.options.classwise_nms = field<bool>(dt, "detect", "classwise_nms");
  require(c.detect.regions_per_image >= 1, "detect.regions_per_image", "must be >= 1");
  require(c.detect.options.nms_threshold > 0 && c.detect.options.nms_threshold <= 1, "detect.nms",
          "must lie in (0, 1]");

  const json& e = j.at("eval");
  c.eval.iou_sweep = field<std::vector<double>>(e, "eval", "iou_sweep");
  for (double v : c.eval.iou_sweep) require(v > 0 && v <= 1, "eval.iou_sweep", "entries must lie in (0, 1]");
  c.eval.interpolation = parse_interpolation(field<std::string>(e, "eval", "interpolation"));
  derive(c);
  return c;
}

RunConfig build(const json& file, const std::vector<std::string>& overrides) {
  const json defaults = to_json(RunConfig{});
  json merged = defaults;
  merge_value(merged, defaults, file, "");
  for (const auto& o : overrides) apply_override(merged, defaults, o);
  return from_json(merged);
}

}  // namespace

std::string default_config_json() { return to_json(RunConfig{}).dump(2); }

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  json file = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      file = json::parse(text);
    } catch (const json::exception& e) {
      throw BadConfig(std::string("config is not valid JSON: ") + e.what());
    }
  }
  return build(file, overrides);
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_config_text("", overrides);
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

std::string config_json(const RunConfig& config) {
  json j = to_json(config);
  j.erase("out");
  return j.dump();
}

std::string config_digest(const RunConfig& config) { return hex_digest(fnv1a(config_json(config))); }

}  // namespace regalign
