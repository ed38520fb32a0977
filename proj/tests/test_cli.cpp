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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "regalign/cli.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
  json summary() const {
    std::istringstream in(out);
    std::string line, last;
    while (std::getline(in, line))
      if (!line.empty()) last = line;
    return json::parse(last);
  }
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = regalign::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kTiny{"--set", "data.n_train=24",          "--set", "data.n_eval=8",
                                     "--set", "pretrain_image.iterations=6", "--set", "pretrain_region.iterations=6",
                                     "--set", "finetune.iterations=4",      "--set", "pool.min_freq=1",
                                     "--set", "log_every=2"};

std::vector<std::string> cmd(const std::string& name, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{name, "--out", out.string()};
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"gen-data", "--threads", "0"}).code == 1);
  const auto bad = run({"gen-data", "--out", fresh_dir("regalign_cli_bad").string(), "--set", "tau=-1"});
  CHECK(bad.code == 1);
  CHECK(bad.summary()["error"] == "BadConfig");
  CHECK(run({"eval", "--out", fresh_dir("regalign_cli_bad").string()}).code == 1);  // --detections is required
}

TEST_CASE("missing inputs exit 2") {
  const auto dir = fresh_dir("regalign_cli_missing");
  CHECK(run(cmd("build-concepts", dir)).code == 2);
  CHECK(run({"gen-data", "--config", (dir / "nope.json").string(), "--out", dir.string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("full pipeline through the command line") {
  const auto dir = fresh_dir("regalign_cli_pipeline");
  const auto gen = run(cmd("gen-data", dir));
  REQUIRE(gen.code == 0);
  CHECK(gen.summary()["scenes"] == 32);
  CHECK(gen.summary()["novel"] == 8);
  REQUIRE(run(cmd("build-concepts", dir)).code == 0);
  CHECK(fs::exists(dir / "concepts" / "concepts.json"));
  REQUIRE(run(cmd("pretrain-image", dir)).code == 0);
  REQUIRE(run(cmd("pretrain-region", dir)).code == 0);

  std::ifstream log(dir / "pretrain_region_log.jsonl");
  std::string line;
  std::vector<json> entries;
  while (std::getline(log, line)) entries.push_back(json::parse(line));
  REQUIRE(entries.size() == 3);
  CHECK(entries[1]["iter"] == 2);
  for (const char* key : {"L_cntrst", "L_dist", "L_cntrst_img", "L_total", "grad_norm"}) CHECK(entries[0].contains(key));

  const auto zs = run(cmd("zeroshot", dir, {"--split", "generalized"}));
  REQUIRE(zs.code == 0);
  for (const char* key : {"novel_ap50", "base_ap50", "all_ap50"}) CHECK(zs.summary().contains(key));
  const auto metrics_path = dir / "metrics_generalized_student.json";
  const auto first = slurp(metrics_path);
  REQUIRE(run(cmd("zeroshot", dir, {"--split", "generalized", "--threads", "2"})).code == 0);
  CHECK(slurp(metrics_path) == first);

  REQUIRE(run(cmd("finetune", dir)).code == 0);
  CHECK(fs::exists(dir / "finetuned.ckpt"));
  REQUIRE(run(cmd("zeroshot", dir, {"--split", "novel", "--checkpoint", "finetuned"})).code == 0);
  CHECK(fs::exists(dir / "detections_novel_finetuned.jsonl"));

  const auto dets = (dir / "detections_generalized_student.jsonl").string();
  const auto ev = run(cmd("eval", dir, {"--detections", dets, "--split", "generalized"}));
  REQUIRE(ev.code == 0);
  CHECK(ev.summary()["all_ap50"] == zs.summary()["all_ap50"]);
  // A dump from another config is refused unless forced.
  CHECK(run(cmd("eval", dir, {"--detections", dets, "--set", "seed=5", "--force"})).code == 0);
  CHECK(run(cmd("eval", dir, {"--detections", dets, "--set", "tau=0.02"})).code == 1);

  REQUIRE(run(cmd("dump-vis", dir, {"--count", "2"})).code == 0);
  CHECK(fs::exists(dir / "vis"));
  CHECK(std::distance(fs::directory_iterator(dir / "vis"), fs::directory_iterator()) == 4);

  // A data section that no longer matches the stored dataset.
  const auto stale = run(cmd("zeroshot", dir, {"--set", "data.n_eval=9"}));
  CHECK(stale.code == 1);
  CHECK(stale.summary()["error"] == "DigestMismatch");

  {
    auto bytes = slurp(dir / "student.ckpt");
    bytes[bytes.size() / 2] ^= 0x5a;
    std::ofstream(dir / "student.ckpt", std::ios::binary) << bytes;
  }
  const auto corrupt = run(cmd("zeroshot", dir));
  CHECK(corrupt.code == 2);
  CHECK(corrupt.summary()["error"] == "CorruptCheckpoint");
  fs::remove_all(dir);
}

TEST_CASE("output directory precedence") {
  const auto flag = fresh_dir("regalign_cli_flag"), env = fresh_dir("regalign_cli_env"),
             cfg = fresh_dir("regalign_cli_cfgout");
  ::setenv("REGALIGN_OUT", env.string().c_str(), 1);
  std::vector<std::string> args{"gen-data", "--set", "data.n_train=4", "--set", "data.n_eval=2",
                                "--set",    "out=" + cfg.string()};
  REQUIRE(run(args).code == 0);
  CHECK(fs::exists(env / "data" / "manifest.json"));
  args.insert(args.end(), {"--out", flag.string()});
  REQUIRE(run(args).code == 0);
  CHECK(fs::exists(flag / "data" / "manifest.json"));
  ::unsetenv("REGALIGN_OUT");
  args.resize(args.size() - 2);
  REQUIRE(run(args).code == 0);
  CHECK(fs::exists(cfg / "data" / "manifest.json"));
  for (const auto& d : {flag, env, cfg}) fs::remove_all(d);
}
