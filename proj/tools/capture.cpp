// Copyright 2026 The Capture Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// capture: command-line front-end.
//
//   capture gen-data   --out run
//   capture pretrain   --out run
//   capture embed      --out run
//   capture retrieve   --out run
//   capture evaluate   --out run
//   capture eval-single --out run
//   capture ablate pretext --seed 7 --out runs
//   capture report --check --out runs
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime failure, 3 failed
// acceptance check.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "capture/experiment.hpp"

namespace fs = std::filesystem;
using namespace capture;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheck = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string out = "runs";
  bool deterministic = false;
};

struct Paths {
  std::string data;
  std::string checkpoint;
  std::string gallery;
  std::string results;
};

ExperimentSpec resolve_spec(const Globals& g) {
  ExperimentSpec spec = load_experiment_spec(g.config);
  if (!g.seeds.empty()) spec.seeds = g.seeds;
  if (g.seed) spec.seeds = {*g.seed};
  spec.out = g.out;
  return spec;
}

std::string or_default(const std::string& value, const fs::path& fallback) {
  return value.empty() ? fallback.string() : value;
}

// Train-time proposer of a single run; stored next to the checkpoint so
// later stages rebuild the same region projection.
ProposerConfig run_proposer(const ExperimentSpec& spec) {
  ProposerConfig p = spec.proposer;
  p.seed = spec.seeds.front();
  return p;
}

ProposerConfig proposer_for_checkpoint(const std::string& checkpoint, const ExperimentSpec& spec) {
  const std::string side = checkpoint + ".proposer.json";
  ProposerConfig p = run_proposer(spec);
  if (fs::exists(side)) read_json(read_json_file(side), p);
  return p;
}

void write_error_record(const std::string& out, const std::string& stage, const std::string& type,
                        const std::string& message) {
  std::error_code ec;
  fs::create_directories(out, ec);
  Json j;
  j["stage"] = stage;
  j["error_type"] = type;
  j["message"] = message;
  std::ofstream os(fs::path(out) / "error.json");
  os << j.dump(2) << '\n';
}

DatasetBundle load_data(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.jsonl"))
    throw InputError("no dataset in " + dir + " (run gen-data first)");
  return read_dataset(dir);
}

int cmd_gen_data(const Globals& g, const Paths& p) {
  const ExperimentSpec spec = resolve_spec(g);
  CorpusConfig c = spec.corpus;
  c.seed = spec.seeds.front();
  const std::string dir = or_default(p.data, fs::path(g.out) / "data");
  fs::create_directories(dir);
  const DatasetBundle bundle = build_dataset(c);
  write_dataset(bundle, dir);
  std::cout << "wrote " << bundle.samples.size() << " samples to " << dir << '\n';
  return kExitOk;
}

int cmd_pretrain(const Globals& g, const Paths& p) {
  const ExperimentSpec spec = resolve_spec(g);
  const DatasetBundle data = load_data(or_default(p.data, fs::path(g.out) / "data"));
  ModelConfig mc = spec.model;
  mc.seed = spec.seeds.front();
  if (mc.vocab_size == 0) mc.vocab_size = data.catalog.vocab.size();
  PretrainConfig tc = spec.pretrain;
  tc.seed = spec.seeds.front();
  const ProposerConfig proposer = run_proposer(spec);
  mc.d_v = proposer.d_v;

  CaptureModel model(mc);
  const RegionEncoder encoder(proposer);
  const auto examples = make_training_examples(data, model, proposer, encoder);
  const auto result = train(model, examples, tc, [](int epoch, const CaptureModel&) {
    std::clog << "epoch " << epoch + 1 << " done\n";
  });
  const std::string ckpt = or_default(p.checkpoint, fs::path(g.out) / "checkpoint.bin");
  fs::create_directories(fs::path(ckpt).parent_path().empty() ? fs::path(".")
                                                               : fs::path(ckpt).parent_path());
  save_checkpoint(model, ckpt);
  std::ofstream(ckpt + ".proposer.json") << to_json(proposer).dump(2) << '\n';
  write_loss_curve((fs::path(g.out) / "loss.csv").string(), result.curve);
  std::cout << "final loss " << result.curve.back().total << "; checkpoint " << ckpt << '\n';
  return kExitOk;
}

struct EvalContext {
  ExperimentSpec spec;
  DatasetBundle data;
  std::optional<CaptureModel> model;
  ProposerConfig proposer;
};

EvalContext eval_context(const Globals& g, const Paths& p, bool need_model) {
  EvalContext ctx{resolve_spec(g), load_data(or_default(p.data, fs::path(g.out) / "data")), {}, {}};
  const std::string ckpt = or_default(p.checkpoint, fs::path(g.out) / "checkpoint.bin");
  ctx.proposer = proposer_for_checkpoint(ckpt, ctx.spec);
  if (need_model) ctx.model.emplace(load_checkpoint(ckpt));
  return ctx;
}

int cmd_embed(const Globals& g, const Paths& p, const std::string& mode) {
  EvalContext ctx = eval_context(g, p, true);
  EncodeOptions options;
  options.proposer = ctx.proposer;
  if (!mode.empty()) options.proposer.mode = parse_proposal_mode(mode);
  options.concat = ctx.spec.concat;
  const RegionEncoder encoder(ctx.proposer);
  const auto gallery = ctx.data.split(Split::kGallery);
  const GalleryIndex index = build_gallery_index(gallery, *ctx.model, encoder, options);
  const std::string path = or_default(p.gallery, fs::path(g.out) / "gallery.jsonl");
  write_gallery_index(path, index);
  std::cout << "embedded " << index.ids.size() << " gallery samples to " << path << '\n';
  return kExitOk;
}

int cmd_retrieve(const Globals& g, const Paths& p, const std::string& mode,
                 const std::string& merge, const std::string& split) {
  EvalContext ctx = eval_context(g, p, true);
  EncodeOptions options;
  options.proposer = ctx.proposer;
  if (!mode.empty()) options.proposer.mode = parse_proposal_mode(mode);
  options.concat = ctx.spec.concat;
  const RegionEncoder encoder(ctx.proposer);
  const GalleryIndex index =
      read_gallery_index(or_default(p.gallery, fs::path(g.out) / "gallery.jsonl"));
  const MergeMode m = merge.empty() ? ctx.spec.merge : parse_merge_mode(merge);
  const QuerySet queries =
      make_query_set(ctx.data, split.empty() ? ctx.spec.query_split : parse_split(split));
  const auto results = retrieve_all(queries, *ctx.model, encoder, index, options, m);
  const std::string path = or_default(p.results, fs::path(g.out) / "results.jsonl");
  write_results(path, results);
  std::cout << "ranked " << results.size() << " queries to " << path << '\n';
  return kExitOk;
}

int cmd_evaluate(const Globals& g, const Paths& p, const std::vector<int>& cutoffs) {
  const ExperimentSpec spec = resolve_spec(g);
  const DatasetBundle data = load_data(or_default(p.data, fs::path(g.out) / "data"));
  const auto results = read_results(or_default(p.results, fs::path(g.out) / "results.jsonl"));
  std::map<int, std::vector<int>> labels;
  for (const auto& r : results) {
    const Sample& s = data.by_id(r.query_id);
    if (!s.instances()) throw InputError("query " + std::to_string(r.query_id) + " is unlabeled");
    labels[r.query_id] = s.label_set();
  }
  std::map<int, int> categories;
  for (const Sample* s : data.split(Split::kGallery)) categories[s->id()] = *s->category_id();
  const MetricReport report =
      evaluate(results, labels, categories, cutoffs.empty() ? spec.cutoffs : cutoffs);
  write_metric_report((fs::path(g.out) / "metrics.json").string(),
                      (fs::path(g.out) / "per_query.csv").string(), report);
  for (int n : report.cutoffs)
    std::cout << "mAP@" << n << ' ' << report.mean.at(n).ap << "  mAR@" << n << ' '
              << report.mean.at(n).ar << "  Prec@" << n << ' ' << report.mean.at(n).prec << '\n';
  return kExitOk;
}

int cmd_eval_single(const Globals& g, const Paths& p, const std::vector<int>& cutoffs) {
  const ExperimentSpec spec = resolve_spec(g);
  const GalleryIndex index =
      read_gallery_index(or_default(p.gallery, fs::path(g.out) / "gallery.jsonl"));
  const auto results = retrieve_within_gallery(index);
  std::map<int, std::vector<int>> labels;
  for (const auto& [id, cat] : index.categories) labels[id] = {cat};
  const MetricReport report =
      evaluate(results, labels, index.categories, cutoffs.empty() ? spec.cutoffs : cutoffs);
  write_metric_report((fs::path(g.out) / "single_metrics.json").string(),
                      (fs::path(g.out) / "single_per_query.csv").string(), report);
  for (int n : report.cutoffs)
    std::cout << "mAP@" << n << ' ' << report.mean.at(n).ap << "  Prec@" << n << ' '
              << report.mean.at(n).prec << '\n';
  return kExitOk;
}

int cmd_ablate(const Globals& g, const std::string& kind, double holdout_fraction,
               int holdout_brands) {
  ExperimentSpec spec = resolve_spec(g);
  spec.name = kind;
  if (kind == "zeroshot")
    spec.arms = zeroshot_arms(holdout_fraction, holdout_brands);
  else
    spec.arms = arms_for(kind);
  const auto outcome = run_experiment(spec, std::clog);
  write_report((fs::path(spec.out) / spec.name / "summary.json").string());
  for (const auto& a : outcome.summary.at("arms")) {
    const auto& m = a.at("metrics");
    const std::string key = "mAP@" + std::to_string(spec.cutoffs.front());
    std::cout << a.at("name").get<std::string>() << ' ' << key << ' '
              << m.at(key).at("mean").get<double>() << '\n';
  }
  return kExitOk;
}

int cmd_report(const Globals& g, bool check) {
  const auto files = write_report(g.out);
  for (const auto& f : files) std::cout << "wrote " << f << '\n';
  if (!check) return kExitOk;
  const auto checks = check_summaries(g.out);
  bool ok = !checks.empty();
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS" : (c.gating ? "FAIL" : "WARN")) << "  " << c.name << "  ("
              << c.detail << ")\n";
    if (c.gating && !c.passed) ok = false;
  }
  if (checks.empty()) std::cout << "FAIL  no checkable summaries under " << g.out << '\n';
  return ok ? kExitOk : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance-level product retrieval with cross-modal pretraining"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Paths p;
  app.add_option("--config", g.config, "experiment JSON (defaults apply to missing keys)");
  app.add_option("--seed", g.seed, "single seed (overrides the config seed list)");
  app.add_option("--seeds", g.seeds, "seed list")->delimiter(',');
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--deterministic", g.deterministic,
               "accepted for compatibility; every stage is single-threaded and seeded");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  gen->add_option("--data", p.data, "dataset directory (default OUT/data)");

  auto* pre = app.add_subcommand("pretrain", "pretrain on the train split");
  pre->add_option("--data", p.data);
  pre->add_option("--checkpoint", p.checkpoint);

  std::string mode, merge, split;
  std::vector<int> cutoffs;
  auto* emb = app.add_subcommand("embed", "encode the gallery");
  emb->add_option("--data", p.data);
  emb->add_option("--checkpoint", p.checkpoint);
  emb->add_option("--gallery", p.gallery);
  emb->add_option("--proposer-mode", mode, "oracle|jitter|heuristic|whole_image");

  auto* ret = app.add_subcommand("retrieve", "rank the gallery for every query");
  ret->add_option("--data", p.data);
  ret->add_option("--checkpoint", p.checkpoint);
  ret->add_option("--gallery", p.gallery);
  ret->add_option("--results", p.results);
  ret->add_option("--proposer-mode", mode);
  ret->add_option("--merge", merge, "max|mean");
  ret->add_option("--split", split, "val|test");

  auto* ev = app.add_subcommand("evaluate", "mAP/mAR/Prec of a results file");
  ev->add_option("--data", p.data);
  ev->add_option("--results", p.results);
  ev->add_option("--cutoffs", cutoffs)->delimiter(',');

  auto* single = app.add_subcommand("eval-single", "leave-one-out retrieval over the gallery");
  single->add_option("--gallery", p.gallery);
  single->add_option("--cutoffs", cutoffs)->delimiter(',');

  std::string kind;
  double holdout_fraction = 0.25;
  int holdout_brands = 0;
  auto* abl = app.add_subcommand("ablate", "run an ablation matrix");
  abl->add_option("kind", kind, "pretext|layers|detector|zeroshot|baselines")
      ->required()
      ->check(CLI::IsMember({"pretext", "layers", "detector", "zeroshot", "baselines"}));
  abl->add_option("--holdout-fraction", holdout_fraction, "zeroshot: held-out category share");
  abl->add_option("--holdout-brands", holdout_brands, "zeroshot: hold out whole brands instead");

  bool check = false;
  auto* rep = app.add_subcommand("report", "tables and charts for every summary under --out");
  rep->add_flag("--check", check, "exit 3 when an acceptance check fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (gen->parsed()) return cmd_gen_data(g, p);
    if (pre->parsed()) return cmd_pretrain(g, p);
    if (emb->parsed()) return cmd_embed(g, p, mode);
    if (ret->parsed()) return cmd_retrieve(g, p, mode, merge, split);
    if (ev->parsed()) return cmd_evaluate(g, p, cutoffs);
    if (single->parsed()) return cmd_eval_single(g, p, cutoffs);
    if (abl->parsed()) return cmd_ablate(g, kind, holdout_fraction, holdout_brands);
    if (rep->parsed()) return cmd_report(g, check);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    write_error_record(g.out, stage, "config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << stage << " failed: " << e.what() << '\n';
    write_error_record(g.out, stage, "runtime", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
