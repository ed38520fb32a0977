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

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "regalign/encoders.hpp"
#include "regalign/error.hpp"
#include "regalign/util.hpp"

namespace regalign {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "RALN1";
constexpr std::size_t kMagicLen = 5;

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, std::size_t end, const std::string& origin)
      : bytes_(bytes), end_(end), origin_(origin) {}

  std::uint64_t u64() { return read_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + std::ptrdiff_t(pos_), bytes_.begin() + std::ptrdiff_t(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CorruptCheckpoint(origin_ + ": length mismatch (truncated payload)");
  }
  std::uint64_t read_le(int n) {
    need(std::size_t(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(bytes_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += std::size_t(n);
    return v;
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
  std::size_t end_;
  const std::string& origin_;
};

json encoder_config_json(const EncoderConfig& c) {
  return {{"patch_size", c.patch_size}, {"hidden", c.hidden},   {"depth", c.depth},
          {"embed_dim", c.embed_dim},   {"pooled", c.pooled}, {"samples_per_bin", c.samples_per_bin}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.pooled = j.at("pooled").get<std::size_t>();
  c.samples_per_bin = j.at("samples_per_bin").get<std::size_t>();
  return c;
}

}  // namespace

std::vector<unsigned char> encode_tensor_file(const TensorFile& file) {
  std::vector<unsigned char> out(kMagic, kMagic + kMagicLen);
  put_u64(out, file.metadata.size());
  out.insert(out.end(), file.metadata.begin(), file.metadata.end());
  for (const auto& a : file.arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.rank()));
    for (auto e : a.shape()) put_u64(out, e);
    for (double v : a.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a(std::span<const unsigned char>(out)));
  return out;
}

TensorFile decode_tensor_file(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() < kMagicLen + 16 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
    throw CorruptCheckpoint(origin + ": bad magic");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t(bytes[body + std::size_t(i)]) << (8 * i);
  if (stored != fnv1a(std::span<const unsigned char>(bytes.data(), body)))
    throw CorruptCheckpoint(origin + ": digest mismatch");

  std::vector<unsigned char> payload(bytes.begin() + kMagicLen, bytes.begin() + std::ptrdiff_t(body));
  Reader r(payload, payload.size(), origin);
  TensorFile file;
  const std::uint64_t meta_len = r.u64();
  if (meta_len > r.remaining()) throw CorruptCheckpoint(origin + ": length mismatch (metadata)");
  file.metadata = r.text(meta_len);
  while (r.remaining() > 0) {
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw CorruptCheckpoint(origin + ": bad array rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.u64();
      if (e == 0 || e > r.remaining()) throw CorruptCheckpoint(origin + ": length mismatch (extent)");
      n *= e;
    }
    if (n > r.remaining() / 8) throw CorruptCheckpoint(origin + ": length mismatch (array data)");
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    file.arrays.emplace_back(std::move(shape), std::move(data));
  }
  return file;
}

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
  const auto bytes = encode_tensor_file(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_tensor_file(bytes, path.string());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  TensorFile file;
  json meta = {{"kind", "visual-encoder"},
               {"stage", ckpt.stage},
               {"seed", ckpt.seed},
               {"config_digest", ckpt.config_digest},
               {"iterations", ckpt.iterations},
               {"encoder", encoder_config_json(ckpt.params.config)},
               {"arrays", ckpt.params.array_names()}};
  file.metadata = meta.dump();
  for (const auto* a : ckpt.params.arrays()) file.arrays.push_back(*a);
  write_tensor_file(file, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  Checkpoint ckpt;
  try {
    const json meta = json::parse(file.metadata);
    if (meta.at("kind") != "visual-encoder") throw CorruptCheckpoint(path.string() + ": not an encoder checkpoint");
    ckpt.stage = meta.at("stage").get<std::string>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.config_digest = meta.at("config_digest").get<std::string>();
    ckpt.iterations = meta.at("iterations").get<std::size_t>();
    VisualEncoderParams like;
    like.config = encoder_config_from_json(meta.at("encoder"));
    ckpt.params = VisualEncoderParams::zeros_like(like);
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(path.string() + ": metadata: " + e.what());
  } catch (const BadConfig& e) {
    throw CorruptCheckpoint(path.string() + ": metadata: " + e.what());
  }
  auto dst = ckpt.params.arrays();
  if (dst.size() != file.arrays.size()) throw CorruptCheckpoint(path.string() + ": array count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i]->same_shape(file.arrays[i])) throw CorruptCheckpoint(path.string() + ": array shape mismatch");
    *dst[i] = file.arrays[i];
  }
  return ckpt;
}

}  // namespace regalign
