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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "regalign/box.hpp"
#include "regalign/numerics.hpp"

namespace regalign {

enum class ShapeKind { circle, square, triangle, cross, bar };

struct ColorSpec {
  std::string name;
  std::array<double, 3> rgb{};
  bool operator==(const ColorSpec&) const = default;
};

/// Named colors and shapes the renderer knows about.
const std::vector<ColorSpec>& builtin_colors();
ShapeKind parse_shape(const std::string& name);
ColorSpec find_color(const std::string& name);

/// Vocabulary = colors x shapes; id = color_index * n_shapes + shape_index.
struct Vocabulary {
  std::vector<ColorSpec> colors;
  std::vector<std::string> shapes;

  std::size_t size() const noexcept { return colors.size() * shapes.size(); }
  std::string name(std::size_t id) const;
  std::vector<std::string> names() const;
  std::size_t color_of(std::size_t id) const { return id / shapes.size(); }
  std::size_t shape_of(std::size_t id) const { return id % shapes.size(); }

  bool operator==(const Vocabulary&) const = default;
};

Vocabulary make_vocabulary(const std::vector<std::string>& colors, const std::vector<std::string>& shapes);

struct LayoutConfig {
  std::size_t image_size = 64;
  std::size_t max_objects = 3;
  double min_object_size = 14;
  double max_object_size = 26;
  double overlap_cap = 0.3;
  double caption_ratio = 0.7;
  double noise_amplitude = 0.2;

  bool operator==(const LayoutConfig&) const = default;
};

struct SceneObject {
  Box box;
  std::size_t concept_id = 0;
  /// False for objects whose concept is withheld from training annotations.
  bool annotated = true;

  bool operator==(const SceneObject&) const = default;
};

enum class Split { train, eval };

struct Scene {
  std::size_t id = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;
  DenseArray image;  // H x W x 3, values in [0, 1]
  std::vector<SceneObject> objects;
  std::string caption;

  bool operator==(const Scene&) const = default;
};

/// Renders one scene; a pure function of (seed, vocabulary, layout).
/// `allowed` restricts the concepts that may appear (all when empty).
Scene generate_scene(std::uint64_t seed, const Vocabulary& vocab, const LayoutConfig& layout,
                     const std::vector<std::size_t>& allowed = {});

/// Foreground mask of one object as rendered, for annotation checks.
std::vector<std::uint8_t> render_mask(ShapeKind kind, const Box& box, std::size_t image_size);

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::vector<std::string> colors{"red", "green", "blue", "yellow", "purple", "orange"};
  std::vector<std::string> shapes{"circle", "square", "triangle", "cross", "bar"};
  std::size_t n_train = 400;
  std::size_t n_eval = 100;
  double novel_fraction = 0.27;
  /// Training annotations exclude novel-concept objects (captions keep them).
  bool base_only = true;
  LayoutConfig layout;

  bool operator==(const DatasetConfig&) const = default;
};

struct Dataset {
  DatasetConfig config;
  Vocabulary vocabulary;
  std::vector<std::size_t> base_ids;
  std::vector<std::size_t> novel_ids;
  std::vector<Scene> scenes;
  std::string config_digest;

  std::vector<const Scene*> split(Split s) const;
  bool is_novel(std::size_t concept_id) const;
  /// Content digest over manifest-level fields and every scene record.
  std::string digest() const;

  bool operator==(const Dataset&) const = default;
};

/// round(novel_fraction * V) ids chosen by a seeded shuffle, sorted.
std::vector<std::size_t> choose_novel_ids(std::size_t vocab_size, double novel_fraction, std::uint64_t seed);

Dataset generate_dataset(const DatasetConfig& config);

/// Per-scene seed derived from the master seed.
std::uint64_t scene_seed(std::uint64_t master_seed, std::size_t scene_id);

/// Writes manifest.json, scenes/<id>.ppm and scenes/<id>.json.
void serialize_dataset(const Dataset& dataset, const std::filesystem::path& directory);
/// Reads a dataset back; images are regenerated from the recorded seeds and
/// checked against the stored PPM bytes. Throws CorruptFile naming the path.
Dataset deserialize_dataset(const std::filesystem::path& directory);

/// Binary P6 PPM, 8-bit, from an H x W x 3 array in [0, 1].
std::vector<unsigned char> encode_ppm(const DenseArray& image);
void write_ppm(const DenseArray& image, const std::filesystem::path& path);

}  // namespace regalign
