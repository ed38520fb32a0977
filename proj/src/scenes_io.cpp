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

#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "regalign/error.hpp"
#include "regalign/scenes.hpp"
#include "regalign/util.hpp"

namespace regalign {

using nlohmann::json;

namespace {

json layout_to_json(const LayoutConfig& l) {
  return {{"image_size", l.image_size},         {"max_objects", l.max_objects},
          {"min_object_size", l.min_object_size}, {"max_object_size", l.max_object_size},
          {"overlap_cap", l.overlap_cap},       {"caption_ratio", l.caption_ratio},
          {"noise_amplitude", l.noise_amplitude}};
}

LayoutConfig layout_from_json(const json& j) {
  LayoutConfig l;
  l.image_size = j.at("image_size").get<std::size_t>();
  l.max_objects = j.at("max_objects").get<std::size_t>();
  l.min_object_size = j.at("min_object_size").get<double>();
  l.max_object_size = j.at("max_object_size").get<double>();
  l.overlap_cap = j.at("overlap_cap").get<double>();
  l.caption_ratio = j.at("caption_ratio").get<double>();
  l.noise_amplitude = j.at("noise_amplitude").get<double>();
  return l;
}

json manifest_json(const Dataset& ds) {
  const auto& c = ds.config;
  json scenes = json::array();
  for (const auto& s : ds.scenes) scenes.push_back(s.id);
  return {{"format", "regalign-dataset-1"},
          {"seed", c.seed},
          {"colors", c.colors},
          {"shapes", c.shapes},
          {"n_train", c.n_train},
          {"n_eval", c.n_eval},
          {"novel_fraction", c.novel_fraction},
          {"base_only", c.base_only},
          {"layout", layout_to_json(c.layout)},
          {"vocabulary", ds.vocabulary.names()},
          {"base_ids", ds.base_ids},
          {"novel_ids", ds.novel_ids},
          {"config_digest", ds.config_digest},
          {"scenes", scenes}};
}

json scene_json(const Scene& s) {
  json objects = json::array();
  for (const auto& o : s.objects)
    objects.push_back({{"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}},
                       {"concept_id", o.concept_id},
                       {"annotated", o.annotated}});
  return {{"id", s.id},
          {"split", s.split == Split::train ? "train" : "eval"},
          {"seed", s.seed},
          {"caption", s.caption},
          {"objects", objects}};
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorruptFile("missing " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const std::filesystem::path& p) {
  const auto bytes = read_bytes(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw CorruptFile(p.string() + ": " + e.what());
  }
}

void write_bytes(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

}  // namespace

std::string Dataset::digest() const {
  std::uint64_t h = fnv1a(manifest_json(*this).dump());
  for (const auto& s : scenes) h = fnv1a(scene_json(s).dump(), h);
  return hex_digest(h);
}

void write_ppm(const DenseArray& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void serialize_dataset(const Dataset& dataset, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory / "scenes", ec);
  if (ec) throw IoError("cannot create " + (directory / "scenes").string() + ": " + ec.message());
  for (const auto& s : dataset.scenes) {
    const auto stem = directory / "scenes" / std::to_string(s.id);
    write_ppm(s.image, stem.string() + ".ppm");
    write_bytes(stem.string() + ".json", scene_json(s).dump(1) + "\n");
  }
  // Manifest last: its presence marks a complete dataset.
  write_bytes(directory / "manifest.json", manifest_json(dataset).dump(1) + "\n");
}

Dataset deserialize_dataset(const std::filesystem::path& directory) {
  const auto manifest_path = directory / "manifest.json";
  const json m = read_json(manifest_path);
  Dataset ds;
  try {
    if (m.at("format") != "regalign-dataset-1") throw CorruptFile(manifest_path.string() + ": unknown format");
    auto& c = ds.config;
    c.seed = m.at("seed").get<std::uint64_t>();
    c.colors = m.at("colors").get<std::vector<std::string>>();
    c.shapes = m.at("shapes").get<std::vector<std::string>>();
    c.n_train = m.at("n_train").get<std::size_t>();
    c.n_eval = m.at("n_eval").get<std::size_t>();
    c.novel_fraction = m.at("novel_fraction").get<double>();
    c.base_only = m.at("base_only").get<bool>();
    c.layout = layout_from_json(m.at("layout"));
    ds.vocabulary = make_vocabulary(c.colors, c.shapes);
    ds.base_ids = m.at("base_ids").get<std::vector<std::size_t>>();
    ds.novel_ids = m.at("novel_ids").get<std::vector<std::size_t>>();
    ds.config_digest = m.at("config_digest").get<std::string>();
    if (m.at("vocabulary").get<std::vector<std::string>>() != ds.vocabulary.names())
      throw CorruptFile(manifest_path.string() + ": vocabulary does not match colors x shapes");
  } catch (const json::exception& e) {
    throw CorruptFile(manifest_path.string() + ": " + e.what());
  } catch (const BadConfig& e) {
    throw CorruptFile(manifest_path.string() + ": " + e.what());
  }

  for (const auto& id_json : m.at("scenes")) {
    const auto id = id_json.get<std::size_t>();
    const auto stem = (directory / "scenes" / std::to_string(id)).string();
    const std::filesystem::path json_path = stem + ".json";
    const std::filesystem::path ppm_path = stem + ".ppm";
    const json sj = read_json(json_path);
    Scene s;
    try {
      s.id = sj.at("id").get<std::size_t>();
      s.split = sj.at("split") == "train" ? Split::train : Split::eval;
      s.seed = sj.at("seed").get<std::uint64_t>();
      s.caption = sj.at("caption").get<std::string>();
      for (const auto& o : sj.at("objects")) {
        const auto b = o.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw CorruptFile(json_path.string() + ": box needs 4 coordinates");
        s.objects.push_back({Box{b[0], b[1], b[2], b[3]}, o.at("concept_id").get<std::size_t>(),
                             o.at("annotated").get<bool>()});
      }
    } catch (const json::exception& e) {
      throw CorruptFile(json_path.string() + ": " + e.what());
    }
    if (s.id != id) throw CorruptFile(json_path.string() + ": id mismatch");
    s.image = generate_scene(s.seed, ds.vocabulary, ds.config.layout).image;
    if (read_bytes(ppm_path) != encode_ppm(s.image))
      throw CorruptFile(ppm_path.string() + ": image bytes do not match the recorded seed");
    ds.scenes.push_back(std::move(s));
  }
  return ds;
}

}  // namespace regalign
