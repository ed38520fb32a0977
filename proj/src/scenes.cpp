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

#include "regalign/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <set>

#include "regalign/error.hpp"
#include "regalign/parallel.hpp"
#include "regalign/util.hpp"

namespace regalign {

const std::vector<ColorSpec>& builtin_colors() {
  static const std::vector<ColorSpec> colors{
      {"red", {0.90, 0.10, 0.10}},   {"green", {0.10, 0.75, 0.15}}, {"blue", {0.15, 0.25, 0.95}},
      {"yellow", {0.95, 0.90, 0.10}}, {"purple", {0.60, 0.15, 0.80}}, {"orange", {1.00, 0.55, 0.05}},
      {"cyan", {0.10, 0.85, 0.90}},  {"white", {0.97, 0.97, 0.97}}, {"pink", {1.00, 0.60, 0.75}},
      {"brown", {0.55, 0.35, 0.15}},
  };
  return colors;
}

ShapeKind parse_shape(const std::string& name) {
  if (name == "circle") return ShapeKind::circle;
  if (name == "square") return ShapeKind::square;
  if (name == "triangle") return ShapeKind::triangle;
  if (name == "cross") return ShapeKind::cross;
  if (name == "bar") return ShapeKind::bar;
  throw BadConfig("unknown shape \"" + name + "\"");
}

ColorSpec find_color(const std::string& name) {
  for (const auto& c : builtin_colors())
    if (c.name == name) return c;
  throw BadConfig("unknown color \"" + name + "\"");
}

std::string Vocabulary::name(std::size_t id) const {
  return colors.at(color_of(id)).name + " " + shapes.at(shape_of(id));
}

std::vector<std::string> Vocabulary::names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back(name(i));
  return out;
}

Vocabulary make_vocabulary(const std::vector<std::string>& colors, const std::vector<std::string>& shapes) {
  if (colors.empty() || shapes.empty()) throw BadConfig("vocabulary needs colors and shapes");
  if (std::set<std::string>(colors.begin(), colors.end()).size() != colors.size())
    throw BadConfig("duplicate color");
  if (std::set<std::string>(shapes.begin(), shapes.end()).size() != shapes.size())
    throw BadConfig("duplicate shape");
  Vocabulary v;
  for (const auto& c : colors) v.colors.push_back(find_color(c));
  for (const auto& s : shapes) {
    (void)parse_shape(s);
    v.shapes.push_back(s);
  }
  return v;
}

std::vector<std::uint8_t> render_mask(ShapeKind kind, const Box& box, std::size_t image_size) {
  std::vector<std::uint8_t> mask(image_size * image_size, 0);
  const double cx = 0.5 * (box.x1 + box.x2);
  const double cy = 0.5 * (box.y1 + box.y2);
  const double w = box.width();
  const double h = box.height();
  const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(box.x1)));
  const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(box.y1)));
  const auto xe = std::min(image_size, static_cast<std::size_t>(std::ceil(box.x2)));
  const auto ye = std::min(image_size, static_cast<std::size_t>(std::ceil(box.y2)));
  for (std::size_t y = y0; y < ye; ++y) {
    for (std::size_t x = x0; x < xe; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      if (px < box.x1 || px > box.x2 || py < box.y1 || py > box.y2) continue;
      bool in = false;
      switch (kind) {
        case ShapeKind::square:
        case ShapeKind::bar:
          in = true;
          break;
        case ShapeKind::circle: {
          const double r = 0.5 * std::min(w, h);
          in = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
          break;
        }
        case ShapeKind::triangle:
          in = std::abs(px - cx) <= 0.5 * w * (py - box.y1) / h;
          break;
        case ShapeKind::cross: {
          const double t = std::max(w, h) / 3.0;
          in = std::abs(px - cx) <= 0.5 * t || std::abs(py - cy) <= 0.5 * t;
          break;
        }
      }
      if (in) mask[y * image_size + x] = 1;
    }
  }
  return mask;
}

namespace {

std::optional<Box> tight_bounds(const std::vector<std::uint8_t>& mask, std::size_t n) {
  std::size_t xmin = n, ymin = n, xmax = 0, ymax = 0;
  bool any = false;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (mask[y * n + x]) {
        any = true;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
  if (!any) return std::nullopt;
  return Box{double(xmin), double(ymin), double(xmax + 1), double(ymax + 1)};
}

/// True when any pixel of `a` is within one pixel of a pixel of `b`.
bool touches(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b, std::size_t n) {
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      if (!a[y * n + x]) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const long yy = long(y) + dy, xx = long(x) + dx;
          if (yy < 0 || xx < 0 || yy >= long(n) || xx >= long(n)) continue;
          if (b[std::size_t(yy) * n + std::size_t(xx)]) return true;
        }
    }
  return false;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const Vocabulary& vocab, const LayoutConfig& layout,
                     const std::vector<std::size_t>& allowed) {
  if (vocab.size() == 0) throw BadConfig("empty vocabulary");
  const std::size_t n = layout.image_size;
  if (n < 32) throw BadConfig("image_size must be >= 32");
  if (layout.max_objects < 1) throw BadConfig("max_objects must be >= 1");
  if (!(layout.min_object_size >= 4 && layout.min_object_size <= layout.max_object_size &&
        layout.max_object_size <= double(n)))
    throw BadConfig("object size bounds");

  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.image = DenseArray({n, n, 3});
  for (auto& v : scene.image.values()) v = rng.uniform() * layout.noise_amplitude;

  const std::size_t n_objects = 1 + rng.below(layout.max_objects);
  std::vector<std::vector<std::uint8_t>> masks;
  for (std::size_t k = 0; k < n_objects; ++k) {
    const std::size_t concept_id = allowed.empty() ? rng.below(vocab.size()) : allowed[rng.below(allowed.size())];
    const ShapeKind kind = parse_shape(vocab.shapes[vocab.shape_of(concept_id)]);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double s = std::round(rng.uniform(layout.min_object_size, layout.max_object_size));
      double w = s, h = s;
      const bool vertical = rng.uniform() < 0.5;
      if (kind == ShapeKind::bar) {
        const double thin = std::max(3.0, std::round(s / 3.0));
        (vertical ? w : h) = thin;
      }
      const double x1 = double(rng.below(std::size_t(double(n) - w) + 1));
      const double y1 = double(rng.below(std::size_t(double(n) - h) + 1));
      const Box frame{x1, y1, x1 + w, y1 + h};
      auto mask = render_mask(kind, frame, n);
      const auto tight = tight_bounds(mask, n);
      if (!tight) continue;
      bool ok = true;
      for (std::size_t j = 0; j < masks.size() && ok; ++j)
        ok = iou(*tight, scene.objects[j].box) < layout.overlap_cap && !touches(mask, masks[j], n);
      if (!ok) continue;
      scene.objects.push_back({*tight, concept_id, true});
      masks.push_back(std::move(mask));
      placed = true;
    }
    if (!placed)
      throw LayoutFailure("object " + std::to_string(k) + " of scene seed " + std::to_string(seed) +
                          " could not be placed in 100 attempts");
  }

  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& rgb = vocab.colors[vocab.color_of(scene.objects[k].concept_id)].rgb;
    for (std::size_t p = 0; p < n * n; ++p)
      if (masks[k][p])
        for (std::size_t c = 0; c < 3; ++c) scene.image[p * 3 + c] = rgb[c];
  }

  std::vector<std::size_t> mentioned;
  for (std::size_t k = 0; k < scene.objects.size(); ++k)
    if (rng.uniform() < layout.caption_ratio) mentioned.push_back(k);
  if (mentioned.empty()) mentioned.push_back(rng.below(scene.objects.size()));
  scene.caption = "a photo of a " + vocab.name(scene.objects[mentioned[0]].concept_id);
  for (std::size_t i = 1; i < mentioned.size(); ++i)
    scene.caption += " and a " + vocab.name(scene.objects[mentioned[i]].concept_id);
  return scene;
}

std::uint64_t scene_seed(std::uint64_t master_seed, std::size_t scene_id) {
  return mix_seed(master_seed, 0x5ce9e000ULL + scene_id);
}

std::vector<std::size_t> choose_novel_ids(std::size_t vocab_size, double novel_fraction, std::uint64_t seed) {
  if (!(novel_fraction >= 0.0 && novel_fraction < 1.0)) throw BadConfig("novel_fraction must be in [0, 1)");
  const auto k = static_cast<std::size_t>(std::llround(novel_fraction * double(vocab_size)));
  std::vector<std::size_t> ids(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) ids[i] = i;
  Rng rng(mix_seed(seed, 0x6e6f76));
  for (std::size_t i = vocab_size; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  ids.resize(std::min(k, vocab_size));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<const Scene*> Dataset::split(Split s) const {
  std::vector<const Scene*> out;
  for (const auto& sc : scenes)
    if (sc.split == s) out.push_back(&sc);
  return out;
}

bool Dataset::is_novel(std::size_t concept_id) const {
  return std::binary_search(novel_ids.begin(), novel_ids.end(), concept_id);
}

Dataset generate_dataset(const DatasetConfig& config) {
  if (config.n_train == 0) throw BadConfig("n_train must be >= 1");
  if (config.n_eval == 0) throw BadConfig("n_eval must be >= 1");
  Dataset ds;
  ds.config = config;
  ds.vocabulary = make_vocabulary(config.colors, config.shapes);
  ds.novel_ids = choose_novel_ids(ds.vocabulary.size(), config.novel_fraction, config.seed);
  for (std::size_t i = 0; i < ds.vocabulary.size(); ++i)
    if (!ds.is_novel(i)) ds.base_ids.push_back(i);
  if (ds.base_ids.empty()) throw BadConfig("no base categories");

  const std::size_t total = config.n_train + config.n_eval;
  ds.scenes.resize(total);
  // Each scene is independent and seeded from its id, so the result does
  // not depend on the schedule.
  parallel_for(total, [&](std::size_t id) {
    Scene s = generate_scene(scene_seed(config.seed, id), ds.vocabulary, config.layout);
    s.id = id;
    s.split = id < config.n_train ? Split::train : Split::eval;
    if (s.split == Split::train && config.base_only)
      for (auto& o : s.objects) o.annotated = !ds.is_novel(o.concept_id);
    ds.scenes[id] = std::move(s);
  });
  return ds;
}

std::vector<unsigned char> encode_ppm(const DenseArray& image) {
  if (image.rank() != 3 || image.extent(2) != 3) throw BadShape("PPM needs an H x W x 3 image");
  const std::string header =
      "P6\n" + std::to_string(image.extent(1)) + " " + std::to_string(image.extent(0)) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + image.size());
  for (double v : image.values())
    out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

}  // namespace regalign
