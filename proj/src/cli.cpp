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

#include "regalign/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "regalign/error.hpp"
#include "regalign/kernels.hpp"
#include "regalign/pipeline.hpp"
#include "regalign/util.hpp"

namespace regalign {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  int threads = 1;
  bool force = false;
  std::string split = "generalized";
  std::string checkpoint = "student";
  std::string teacher;
  std::string detections;
  std::size_t count = 8;
};

struct Context {
  RunConfig config;
  std::string digest;
  fs::path root;
};

Context make_context(const Options& opt) {
  Context ctx;
  ctx.config = parse_config(opt.config, opt.sets);
  ctx.digest = config_digest(ctx.config);
  if (!opt.out.empty()) {
    ctx.root = opt.out;
  } else if (const char* env = std::getenv("REGALIGN_OUT"); env != nullptr && *env != '\0') {
    ctx.root = env;
  } else {
    ctx.root = ctx.config.out;
  }
  std::error_code ec;
  fs::create_directories(ctx.root, ec);
  if (ec) throw IoError("cannot create " + ctx.root.string() + ": " + ec.message());
  return ctx;
}

Dataset load_data(const Context& ctx, bool force) {
  Dataset ds = deserialize_dataset(ctx.root / "data");
  if (!(ds.config == ctx.config.data) && !force)
    throw DigestMismatch("dataset in " + (ctx.root / "data").string() +
                         " was generated with a different data section; rerun gen-data or pass --force");
  return ds;
}

fs::path checkpoint_path(const Context& ctx, const std::string& name) {
  if (name == "teacher" || name == "student" || name == "finetuned") return ctx.root / (name + ".ckpt");
  return name;
}

TrainLogger jsonl_logger(std::ofstream& file, std::size_t every) {
  return [&file, every](const TrainLogEntry& e) {
    if (e.iter % every != 0) return;
    const json j = {{"iter", e.iter},
                    {"L_cntrst", e.report.contrastive},
                    {"L_dist", e.report.distillation},
                    {"L_cntrst_img", e.report.image_contrastive},
                    {"L_total", e.report.total},
                    {"grad_norm", e.report.grad_norm}};
    file << j.dump() << '\n';
  };
}

std::ofstream open_log(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

json aggregates(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"novel_ap50", opt(r.novel_ap50)}, {"base_ap50", opt(r.base_ap50)}, {"all_ap50", opt(r.all_ap50)}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text << '\n';
  if (!f) throw IoError("write failed for " + path.string());
}

json cmd_gen_data(const Context& ctx) {
  const Dataset ds = make_dataset(ctx.config);
  serialize_dataset(ds, ctx.root / "data");
  return {{"scenes", ds.scenes.size()},
          {"base", ds.base_ids.size()},
          {"novel", ds.novel_ids.size()},
          {"dataset_digest", ds.digest()},
          {"path", (ctx.root / "data").string()}};
}

json cmd_build_concepts(const Context& ctx, const Options& opt) {
  const Dataset ds = load_data(ctx, opt.force);
  const TextEncoder text = make_text_encoder(ctx.config);
  const ConceptPool pool = make_concept_pool(ctx.config, ds, text);
  save_concept_pool(pool, ctx.root / "concepts", ctx.digest);
  return {{"concepts", pool.concepts.size()}, {"path", (ctx.root / "concepts").string()}};
}

json cmd_pretrain_image(const Context& ctx, const Options& opt) {
  const Dataset ds = load_data(ctx, opt.force);
  const TextEncoder text = make_text_encoder(ctx.config);
  auto log = open_log(ctx.root / "pretrain_image_log.jsonl");
  const Checkpoint ckpt = run_image_pretraining(ctx.config, ds, text, jsonl_logger(log, ctx.config.log_every));
  save_checkpoint(ckpt, ctx.root / "teacher.ckpt");
  return {{"stage", ckpt.stage}, {"iterations", ckpt.iterations}, {"path", (ctx.root / "teacher.ckpt").string()}};
}

json cmd_pretrain_region(const Context& ctx, const Options& opt) {
  const Dataset ds = load_data(ctx, opt.force);
  const TextEncoder text = make_text_encoder(ctx.config);
  const ConceptPool pool = load_concept_pool(ctx.root / "concepts");
  const Checkpoint teacher = load_checkpoint(opt.teacher.empty() ? ctx.root / "teacher.ckpt" : fs::path(opt.teacher));
  auto log = open_log(ctx.root / "pretrain_region_log.jsonl");
  const Checkpoint ckpt =
      run_region_pretraining(ctx.config, ds, teacher, pool, text, jsonl_logger(log, ctx.config.log_every));
  save_checkpoint(ckpt, ctx.root / "student.ckpt");
  return {{"stage", ckpt.stage},
          {"iterations", ckpt.iterations},
          {"teacher_digest", hex_digest(teacher.params.digest())},
          {"path", (ctx.root / "student.ckpt").string()}};
}

json cmd_finetune(const Context& ctx, const Options& opt) {
  const Dataset ds = load_data(ctx, opt.force);
  const TextEncoder text = make_text_encoder(ctx.config);
  const Checkpoint student = load_checkpoint(checkpoint_path(ctx, opt.checkpoint));
  auto log = open_log(ctx.root / "finetune_log.jsonl");
  const Checkpoint ckpt = run_finetune(ctx.config, ds, student, text, jsonl_logger(log, ctx.config.log_every));
  save_checkpoint(ckpt, ctx.root / "finetuned.ckpt");
  return {{"stage", ckpt.stage}, {"iterations", ckpt.iterations}, {"path", (ctx.root / "finetuned.ckpt").string()}};
}

json cmd_zeroshot(const Context& ctx, const Options& opt) {
  const EvalMode mode = parse_eval_mode(opt.split);
  const Dataset ds = load_data(ctx, opt.force);
  const TextEncoder text = make_text_encoder(ctx.config);
  const fs::path ckpt_path = checkpoint_path(ctx, opt.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const DetectorHead head = make_eval_head(ctx.config, ds, text, mode);
  const auto dets = detect_eval_split(ctx.config, ds, ckpt.params, head);
  const std::string tag = std::string(to_string(mode)) + "_" + ckpt_path.stem().string();
  const fs::path det_path = ctx.root / ("detections_" + tag + ".jsonl");
  const fs::path metrics_path = ctx.root / ("metrics_" + tag + ".json");
  write_detection_dump(dets, ds.vocabulary, det_path);
  const MetricsReport report = evaluate(dets, ds, mode, ctx.config.eval);
  write_text(metrics_path, metrics_json(report));
  json summary = aggregates(report);
  summary["split"] = to_string(mode);
  summary["checkpoint"] = ckpt_path.string();
  summary["detections"] = dets.size();
  summary["metrics"] = metrics_path.string();
  return summary;
}

json cmd_eval(const Context& ctx, const Options& opt) {
  const EvalMode mode = parse_eval_mode(opt.split);
  const Dataset ds = load_data(ctx, opt.force);
  const auto dets = read_detections(opt.detections, ds.vocabulary);
  std::set<std::string> configs, datasets;
  for (const auto& d : dets) configs.insert(d.config_digest), datasets.insert(d.dataset_digest);
  if (!opt.force) {
    if (configs.size() > 1 || datasets.size() > 1)
      throw DigestMismatch(opt.detections + " mixes detections from different runs; pass --force to score anyway");
    if (!configs.empty() && *configs.begin() != ctx.digest)
      throw DigestMismatch("detections carry config digest " + *configs.begin() + ", current config is " +
                           ctx.digest);
    if (!datasets.empty() && *datasets.begin() != ds.digest())
      throw DigestMismatch("detections carry dataset digest " + *datasets.begin() + ", dataset is " + ds.digest());
  }
  const MetricsReport report = evaluate(dets, ds, mode, ctx.config.eval);
  const fs::path metrics_path = ctx.root / ("metrics_eval_" + std::string(to_string(mode)) + ".json");
  write_text(metrics_path, metrics_json(report));
  json summary = aggregates(report);
  summary["split"] = to_string(mode);
  summary["detections"] = dets.size();
  summary["metrics"] = metrics_path.string();
  return summary;
}

json cmd_dump_vis(const Context& ctx, const Options& opt) {
  const EvalMode mode = parse_eval_mode(opt.split);
  const Dataset ds = load_data(ctx, opt.force);
  const TextEncoder text = make_text_encoder(ctx.config);
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(ctx, opt.checkpoint));
  const DetectorHead head = make_eval_head(ctx.config, ds, text, mode);
  const fs::path dir = ctx.root / "vis";
  fs::create_directories(dir);
  const auto scenes = ds.split(Split::eval);
  const std::size_t n = std::min(opt.count, scenes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Scene& s = *scenes[i];
    const auto proposals = make_proposals(s, ctx.config.detect.proposals, ctx.config.detect.regions_per_image,
                                          ctx.config.detect.jitter_sigma, ctx.config.pretrain_region.random_proposals,
                                          mix_seed(mix_seed(ctx.config.seed, 0xde7ec7), s.id));
    const auto dets = zero_shot_detect(ckpt.params, s, proposals, head, ctx.config.detect.options);
    const std::string stem = std::to_string(s.id);
    write_ppm(draw_detections(s.image, dets), dir / (stem + ".ppm"));
    std::ofstream captions(dir / (stem + ".txt"));
    if (!captions) throw IoError("cannot write " + (dir / (stem + ".txt")).string());
    captions << "caption: " << s.caption << '\n';
    for (const auto& d : dets)
      captions << head.class_names[d.category_id] << ' ' << d.score << ' ' << d.box.x1 << ' ' << d.box.y1 << ' '
               << d.box.x2 << ' ' << d.box.y2 << '\n';
  }
  return {{"images", n}, {"path", dir.string()}};
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-text alignment pretraining and open-vocabulary detection on synthetic scenes", "regalign"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file (defaults when omitted)");
    sub->add_option("--set", opt.sets, "Override a config key, e.g. --set pretrain_region.lr=0.004");
    sub->add_option("--out", opt.out, "Output directory (overrides REGALIGN_OUT and the config)");
    sub->add_option("--threads", opt.threads, "OpenMP worker cap")->check(CLI::PositiveNumber);
    sub->add_flag("--force", opt.force, "Accept inputs whose digests do not match the config");
  };
  std::map<std::string, CLI::App*> subs;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    subs[name] = sub;
    return sub;
  };
  add("gen-data", "Generate and serialize the synthetic dataset");
  add("build-concepts", "Mine the concept pool from training captions");
  add("pretrain-image", "Stage 0: image-level pretraining of the teacher");
  add("pretrain-region", "Stage 1: region-level pretraining of the student")
      ->add_option("--teacher", opt.teacher, "Teacher checkpoint (default <out>/teacher.ckpt)");
  auto* zs = add("zeroshot", "Zero-shot detection and evaluation on the eval split");
  zs->add_option("--split", opt.split, "novel, base or generalized");
  zs->add_option("--checkpoint", opt.checkpoint, "teacher, student, finetuned or a path");
  add("finetune", "Fine-tune the detector on base annotations")
      ->add_option("--checkpoint", opt.checkpoint, "Starting checkpoint (default student)");
  auto* ev = add("eval", "Score a detection dump");
  ev->add_option("--detections", opt.detections, "JSON-lines detection dump")->required();
  ev->add_option("--split", opt.split, "novel, base or generalized");
  auto* vis = add("dump-vis", "Write detection overlays for a few eval scenes");
  vis->add_option("--split", opt.split, "novel, base or generalized");
  vis->add_option("--checkpoint", opt.checkpoint, "teacher, student, finetuned or a path");
  vis->add_option("--count", opt.count, "Number of scenes");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  std::string name;
  for (const auto& [n, sub] : subs)
    if (sub->parsed()) name = n;

  try {
    kernels::set_threads(opt.threads);
    const Context ctx = make_context(opt);
    json summary;
    if (name == "gen-data") summary = cmd_gen_data(ctx);
    else if (name == "build-concepts") summary = cmd_build_concepts(ctx, opt);
    else if (name == "pretrain-image") summary = cmd_pretrain_image(ctx, opt);
    else if (name == "pretrain-region") summary = cmd_pretrain_region(ctx, opt);
    else if (name == "zeroshot") summary = cmd_zeroshot(ctx, opt);
    else if (name == "finetune") summary = cmd_finetune(ctx, opt);
    else if (name == "eval") summary = cmd_eval(ctx, opt);
    else summary = cmd_dump_vis(ctx, opt);
    json line = {{"command", name}, {"status", "ok"}, {"config_digest", ctx.digest}};
    line.update(summary);
    out << line.dump() << std::endl;
    return 0;
  } catch (const Error& e) {
    const json line = {{"command", name}, {"status", "error"}, {"error", e.kind()}, {"message", e.what()}};
    out << line.dump() << std::endl;
    err << "error: " << e.what() << '\n';
    return e.is_io() ? 2 : 1;
  } catch (const std::filesystem::filesystem_error& e) {
    const json line = {{"command", name}, {"status", "error"}, {"error", "IoError"}, {"message", e.what()}};
    out << line.dump() << std::endl;
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace regalign
