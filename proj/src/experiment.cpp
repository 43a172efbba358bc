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

#include "capture/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

namespace capture {
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json switches_json(const LossSwitches& s) {
  return {{"mlm", s.mlm}, {"mrp", s.mrp}, {"ctr", s.ctr}, {"itm", s.itm}};
}

LossSwitches read_switches(const Json& j, const std::string& context) {
  LossSwitches s{false, false, false, false};
  FieldReader r(j, context);
  r.get("mlm", s.mlm);
  r.get("mrp", s.mrp);
  r.get("ctr", s.ctr);
  r.get("itm", s.itm);
  r.finish();
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
  if (!os) throw FormatError("failed writing " + path.string());
}

ArmSpec arm(std::string name) {
  ArmSpec a;
  a.name = std::move(name);
  return a;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Spec

void ExperimentSpec::validate() const {
  if (name.empty() || name.find('/') != std::string::npos)
    throw ConfigError("experiment name must be a non-empty path component");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  if (arms.empty()) throw ConfigError("experiment has no arms");
  corpus.validate();
  proposer.validate();
  pretrain.validate();
  if (proposer.mode == ProposalMode::kOracle || proposer.mode == ProposalMode::kJitter)
    throw ConfigError("train-time proposer must not need annotations (heuristic or whole_image)");
  if (query_split == Split::kTrain || query_split == Split::kGallery)
    throw ConfigError("queries come from the val or test split");
  if (cutoffs.empty()) throw ConfigError("no metric cutoffs");
  if (std::set<int>(cutoffs.begin(), cutoffs.end()).size() != cutoffs.size())
    throw ConfigError("duplicate metric cutoffs");
  for (int n : cutoffs)
    if (n <= 0) throw ConfigError("metric cutoffs must be positive");
  std::set<std::string> names;
  for (const auto& a : arms) {
    if (a.name.empty() || a.name.find('/') != std::string::npos)
      throw ConfigError("arm names must be non-empty path components");
    if (!names.insert(a.name).second) throw ConfigError("duplicate arm " + a.name);
    if (a.losses && !a.losses->any()) throw ConfigError("arm " + a.name + ": all losses off");
    if (a.layers)
      for (int v : *a.layers)
        if (v < 0) throw ConfigError("arm " + a.name + ": negative layer count");
    if (!(a.holdout_fraction >= 0.0 && a.holdout_fraction < 1.0))
      throw ConfigError("arm " + a.name + ": holdout_fraction must lie in [0,1)");
    if (a.holdout_brands < 0 || a.holdout_brands > corpus.num_brands)
      throw ConfigError("arm " + a.name + ": holdout_brands out of range");
  }
}

Json to_json(const ArmSpec& a) {
  Json j;
  j["name"] = a.name;
  if (a.losses) j["losses"] = switches_json(*a.losses);
  if (a.layers) j["layers"] = *a.layers;
  if (a.modality) j["modality"] = modality_name(*a.modality);
  if (a.proposal_mode) j["proposal_mode"] = proposal_mode_name(*a.proposal_mode);
  if (a.concat) j["concat"] = *a.concat;
  j["pretrain"] = a.pretrain;
  if (a.holdout_fraction > 0.0) j["holdout_fraction"] = a.holdout_fraction;
  if (a.holdout_brands > 0) j["holdout_brands"] = a.holdout_brands;
  return j;
}

void read_json(const Json& j, ArmSpec& a) {
  FieldReader r(j, "arm");
  r.get("name", a.name);
  if (const Json* s = r.child("losses")) a.losses = read_switches(*s, "arm.losses");
  if (const Json* l = r.child("layers")) {
    if (!l->is_array() || l->size() != 3) throw ConfigError("arm.layers: expected [L, K, H]");
    a.layers = std::array<int, 3>{(*l)[0].get<int>(), (*l)[1].get<int>(), (*l)[2].get<int>()};
  }
  if (const Json* m = r.child("modality")) a.modality = parse_modality(m->get<std::string>());
  if (const Json* m = r.child("proposal_mode"))
    a.proposal_mode = parse_proposal_mode(m->get<std::string>());
  if (const Json* c = r.child("concat")) a.concat = c->get<bool>();
  r.get("pretrain", a.pretrain);
  r.get("holdout_fraction", a.holdout_fraction);
  r.get("holdout_brands", a.holdout_brands);
  r.finish();
}

Json to_json(const ExperimentSpec& s) {
  Json j;
  j["name"] = s.name;
  j["corpus"] = to_json(s.corpus);
  j["proposer"] = to_json(s.proposer);
  j["model"] = to_json(s.model);
  j["pretrain"] = to_json(s.pretrain);
  j["cutoffs"] = s.cutoffs;
  j["merge"] = merge_mode_name(s.merge);
  j["concat"] = s.concat;
  j["query_split"] = split_name(s.query_split);
  Json arms = Json::array();
  for (const auto& a : s.arms) arms.push_back(to_json(a));
  j["arms"] = std::move(arms);
  j["out"] = s.out;
  j["seeds"] = s.seeds;
  return j;
}

void read_json(const Json& j, ExperimentSpec& s) {
  try {
    FieldReader r(j, "experiment");
    r.get("name", s.name);
    if (const Json* c = r.child("corpus")) read_json(*c, s.corpus);
    if (const Json* c = r.child("proposer")) read_json(*c, s.proposer);
    if (const Json* c = r.child("model")) read_json(*c, s.model);
    if (const Json* c = r.child("pretrain")) read_json(*c, s.pretrain);
    r.get("cutoffs", s.cutoffs);
    if (const Json* m = r.child("merge")) s.merge = parse_merge_mode(m->get<std::string>());
    r.get("concat", s.concat);
    if (const Json* q = r.child("query_split")) s.query_split = parse_split(q->get<std::string>());
    if (const Json* arms = r.child("arms")) {
      if (!arms->is_array()) throw ConfigError("experiment.arms: expected a list");
      s.arms.clear();
      for (const auto& item : *arms) {
        ArmSpec a;
        read_json(item, a);
        s.arms.push_back(std::move(a));
      }
    }
    r.get("out", s.out);
    r.get("seeds", s.seeds);
    r.finish();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  ExperimentSpec spec;
  spec.arms = baseline_arms();
  if (!path.empty()) read_json(read_json_file(path), spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Arm matrices

std::vector<ArmSpec> baseline_arms() {
  ArmSpec capture = arm("capture");
  ArmSpec random = arm("random_init");
  random.pretrain = false;
  ArmSpec image = arm("image_only");
  image.modality = Modality::kImageOnly;
  image.layers = std::array<int, 3>{6, 0, 0};
  image.losses = LossSwitches{false, true, false, false};
  ArmSpec text = arm("text_only");
  text.modality = Modality::kTextOnly;
  text.layers = std::array<int, 3>{6, 0, 0};
  text.losses = LossSwitches{true, false, false, false};
  return {capture, random, image, text};
}

std::vector<ArmSpec> pretext_arms() {
  struct Row {
    const char* name;
    LossSwitches losses;
    bool concat;
  };
  const Row rows[] = {
      {"1_masked", {true, true, false, false}, false},
      {"2_masked_concat", {true, true, false, false}, true},
      {"3_masked_itm", {true, true, false, true}, false},
      {"4_masked_ctr", {true, true, true, false}, false},
      {"5_masked_ctr_concat", {true, true, true, false}, true},
  };
  std::vector<ArmSpec> out;
  for (const auto& row : rows) {
    ArmSpec a = arm(row.name);
    a.losses = row.losses;
    a.concat = row.concat;
    out.push_back(a);
  }
  return out;
}

std::vector<ArmSpec> layer_arms() {
  const std::array<int, 3> triples[] = {{6, 0, 6}, {6, 6, 0}, {0, 6, 6}, {2, 5, 5}, {5, 2, 5},
                                        {5, 5, 2}, {2, 2, 2}, {8, 8, 8}, {4, 4, 4}};
  std::vector<ArmSpec> out;
  for (const auto& t : triples) {
    ArmSpec a = arm("L" + std::to_string(t[0]) + "_K" + std::to_string(t[1]) + "_H" +
                    std::to_string(t[2]));
    a.layers = t;
    out.push_back(a);
  }
  return out;
}

std::vector<ArmSpec> detector_arms() {
  std::vector<ArmSpec> out;
  for (ProposalMode m : {ProposalMode::kOracle, ProposalMode::kJitter, ProposalMode::kWholeImage}) {
    ArmSpec a = arm(proposal_mode_name(m));
    a.proposal_mode = m;
    out.push_back(a);
  }
  return out;
}

std::vector<ArmSpec> zeroshot_arms(double fraction, int brands) {
  ArmSpec a = arm(brands > 0 ? "brand_holdout" : "category_holdout");
  if (brands > 0)
    a.holdout_brands = brands;
  else
    a.holdout_fraction = fraction;
  return {a};
}

std::vector<ArmSpec> arms_for(const std::string& ablation) {
  if (ablation == "baselines") return baseline_arms();
  if (ablation == "pretext") return pretext_arms();
  if (ablation == "layers") return layer_arms();
  if (ablation == "detector") return detector_arms();
  if (ablation == "zeroshot") return zeroshot_arms();
  throw ConfigError("unknown ablation: " + ablation);
}

// ---------------------------------------------------------------------------
// Planning

std::vector<int> choose_heldout_categories(const DatasetBundle& bundle, double fraction,
                                           int brands, std::uint64_t seed) {
  const auto& config = bundle.config;
  std::vector<int> eligible;
  for (const auto& p : bundle.catalog.categories)
    if (!std::binary_search(bundle.distractor_categories.begin(),
                            bundle.distractor_categories.end(), p.category_id))
      eligible.push_back(p.category_id);
  Rng rng(mix_seed(seed, 0x2e1dULL));
  std::vector<int> out;
  if (brands > 0) {
    std::vector<int> ids(static_cast<size_t>(config.num_brands));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::set<int> chosen(ids.begin(), ids.begin() + brands);
    for (int c : eligible)
      if (chosen.count(bundle.catalog.at(c).brand_id)) out.push_back(c);
  } else {
    const int want = std::max(1, static_cast<int>(std::lround(fraction * config.num_categories)));
    std::shuffle(eligible.begin(), eligible.end(), rng);
    out.assign(eligible.begin(), eligible.begin() + std::min<int>(want, static_cast<int>(eligible.size())));
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("zero-shot holdout selected no categories");
  return out;
}

RunPlan plan_run(const ExperimentSpec& spec, const ArmSpec& a, std::uint64_t seed,
                 const DatasetBundle* base) {
  RunPlan p;
  p.corpus = spec.corpus;
  p.corpus.seed = seed;
  p.train_proposer = spec.proposer;
  p.train_proposer.seed = seed;
  p.eval_proposer = p.train_proposer;
  if (a.proposal_mode) p.eval_proposer.mode = *a.proposal_mode;
  p.model = spec.model;
  p.model.seed = seed;
  p.model.d_v = p.train_proposer.d_v;
  if (a.layers) {
    p.model.L = (*a.layers)[0];
    p.model.K = (*a.layers)[1];
    p.model.H = (*a.layers)[2];
  }
  if (a.modality) p.model.modality = *a.modality;
  p.pretrain = spec.pretrain;
  p.pretrain.seed = seed;
  if (a.losses) p.pretrain.losses = *a.losses;
  p.pretrain_enabled = a.pretrain;
  p.concat = a.concat.value_or(spec.concat);
  if (a.zero_shot()) {
    DatasetBundle local;
    if (!base) {
      local.config = p.corpus;
      local.catalog = generate_catalog(p.corpus);
      local.distractor_categories = distractor_categories(p.corpus);
      base = &local;
    }
    p.heldout_categories =
        choose_heldout_categories(*base, a.holdout_fraction, a.holdout_brands, seed);
    p.corpus.excluded_train_categories = p.heldout_categories;
  }
  return p;
}

std::vector<TrainingExample> make_training_examples(const DatasetBundle& bundle,
                                                    const CaptureModel& model,
                                                    const ProposerConfig& proposer,
                                                    const RegionEncoder& encoder) {
  std::vector<TrainingExample> out;
  for (const Sample* s : bundle.split(Split::kTrain)) {
    TrainingExample e;
    e.sample_id = s->id();
    e.tokens = model.tokenize(s->caption());
    e.regions = extract_regions(s->image(), nullptr, proposer, encoder,
                                static_cast<std::uint64_t>(s->id()));
    out.push_back(std::move(e));
  }
  return out;
}

QuerySet make_query_set(const DatasetBundle& bundle, Split split,
                        const std::vector<int>& restrict_to) {
  QuerySet q;
  const std::set<int> keep(restrict_to.begin(), restrict_to.end());
  for (const Sample* s : bundle.split(split)) {
    std::vector<int> labels = s->label_set();
    if (!keep.empty()) {
      std::erase_if(labels, [&](int c) { return !keep.count(c); });
      if (labels.empty()) continue;
    }
    q.queries.push_back(s);
    q.labels[s->id()] = std::move(labels);
  }
  return q;
}

std::vector<RetrievalResult> retrieve_all(const QuerySet& queries, const CaptureModel& model,
                                          const RegionEncoder& encoder, const GalleryIndex& index,
                                          const EncodeOptions& options, MergeMode merge) {
  std::vector<RetrievalResult> out;
  out.reserve(queries.queries.size());
  for (const Sample* q : queries.queries)
    out.push_back(retrieve(*q, model, encoder, index, options, merge));
  return out;
}

void write_gallery_index(const std::string& path, const GalleryIndex& index) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  for (size_t i = 0; i < index.ids.size(); ++i) {
    const auto row = index.embeddings.row(static_cast<Eigen::Index>(i));
    Json j;
    j["id"] = index.ids[i];
    j["category"] = index.categories.at(index.ids[i]);
    j["embedding"] = std::vector<double>(row.data(), row.data() + row.size());
    os << j.dump() << '\n';
  }
}

GalleryIndex read_gallery_index(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path);
  GalleryIndex index;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = Json::parse(line);
      index.ids.push_back(j.at("id").get<int>());
      index.categories[index.ids.back()] = j.at("category").get<int>();
      rows.push_back(j.at("embedding").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    if (rows.back().size() != rows.front().size())
      throw FormatError(path + ": embedding widths differ");
  }
  if (rows.empty()) throw FormatError(path + ": empty gallery");
  index.embeddings.resize(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t k = 0; k < rows[i].size(); ++k)
      index.embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return index;
}

// ---------------------------------------------------------------------------
// Summary helpers

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Json summarize_metric(const std::vector<double>& values) {
  Json j;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  j["mean"] = mean;
  j["std"] = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  j["median"] = median(values);
  j["values"] = values;
  return j;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

class Runner {
 public:
  Runner(const ExperimentSpec& spec, std::ostream& log)
      : spec_(spec), log_(log), root_(fs::path(spec.out) / spec.name),
        cache_(fs::path(spec.out) / "cache") {}

  ExperimentOutcome run() {
    fs::create_directories(root_);
    fs::create_directories(cache_);
    fs::remove(root_ / "error.json");
    Json spec_json = to_json(spec_);
    spec_json.erase("out");
    write_text(root_ / "spec.json", spec_json.dump(2) + "\n");

    ExperimentOutcome outcome;
    for (const auto& a : spec_.arms) outcome.arms.push_back({a.name, {}});
    for (std::uint64_t seed : spec_.seeds) {
      for (size_t k = 0; k < spec_.arms.size(); ++k) {
        arm_ = spec_.arms[k].name;
        seed_ = seed;
        outcome.arms[k].seeds.push_back({seed, run_one(spec_.arms[k], seed)});
      }
    }
    outcome.summary = summarize(outcome);
    write_text(root_ / "summary.json", outcome.summary.dump(2) + "\n");
    return outcome;
  }

  void record_error(const std::string& type, const std::string& message) const {
    Json j;
    j["experiment"] = spec_.name;
    j["stage"] = stage_;
    j["arm"] = arm_;
    j["seed"] = seed_;
    j["error_type"] = type;
    j["message"] = message;
    std::error_code ec;
    fs::create_directories(root_, ec);
    std::ofstream os(root_ / "error.json");
    os << j.dump(2) << '\n';
  }

 private:
  const DatasetBundle& dataset(const CorpusConfig& config) {
    const std::string key = to_json(config).dump();
    if (!bundle_ || bundle_key_ != key) {
      bundle_.reset();
      bundle_ = std::make_unique<DatasetBundle>(build_dataset(config));
      bundle_key_ = key;
    }
    return *bundle_;
  }

  CaptureModel pretrained_model(const RunPlan& plan, const DatasetBundle& data,
                                const RegionEncoder& encoder, const fs::path& run_dir) {
    CaptureModel model(plan.model);
    if (!plan.pretrain_enabled) return model;
    Json key;
    key["corpus"] = to_json(plan.corpus);
    key["proposer"] = to_json(plan.train_proposer);
    key["model"] = to_json(plan.model);
    key["pretrain"] = to_json(plan.pretrain);
    const std::string tag = hex64(fnv1a(key.dump()));
    // Shared by every experiment under the same output directory.
    const fs::path ckpt = cache_ / (tag + ".ckpt");
    const fs::path curve = cache_ / (tag + ".loss.csv");
    if (fs::exists(ckpt) && fs::exists(curve)) {
      log_ << "  reuse checkpoint " << ckpt.filename().string() << '\n';
      model = load_checkpoint(ckpt.string());
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      const auto examples = make_training_examples(data, model, plan.train_proposer, encoder);
      const auto result = train(model, examples, plan.pretrain);
      write_loss_curve(curve.string(), result.curve);
      save_checkpoint(model, ckpt.string());
      // Evaluate the float32 weights a later cache hit would see.
      model = load_checkpoint(ckpt.string());
      log_ << "  pretrained in " << seconds_since(t0) << " s, final loss "
           << result.curve.back().total << '\n';
    }
    fs::copy_file(curve, run_dir / "loss.csv", fs::copy_options::overwrite_existing);
    write_text(run_dir / "checkpoint.txt", "cache/" + tag + ".ckpt\n");
    return model;
  }

  MetricReport run_one(const ArmSpec& a, std::uint64_t seed) {
    const fs::path run_dir = root_ / a.name / ("seed_" + std::to_string(seed));
    fs::create_directories(run_dir);
    log_ << "[" << spec_.name << "] arm " << a.name << " seed " << seed << '\n';

    stage_ = "gen-data";
    const RunPlan plan = plan_run(spec_, a, seed, nullptr);
    const DatasetBundle& data = dataset(plan.corpus);
    ModelConfig model_config = plan.model;
    if (model_config.vocab_size == 0) model_config.vocab_size = data.catalog.vocab.size();
    RunPlan resolved = plan;
    resolved.model = model_config;
    Json plan_json;
    plan_json["arm"] = to_json(a);
    plan_json["seed"] = seed;
    plan_json["corpus"] = to_json(resolved.corpus);
    plan_json["train_proposer"] = to_json(resolved.train_proposer);
    plan_json["eval_proposer"] = to_json(resolved.eval_proposer);
    plan_json["model"] = to_json(resolved.model);
    plan_json["pretrain"] = to_json(resolved.pretrain);
    plan_json["pretrained"] = resolved.pretrain_enabled;
    plan_json["concat"] = resolved.concat;
    plan_json["heldout_categories"] = resolved.heldout_categories;
    write_text(run_dir / "plan.json", plan_json.dump(2) + "\n");

    stage_ = "pretrain";
    const RegionEncoder encoder(resolved.train_proposer);
    const CaptureModel model = pretrained_model(resolved, data, encoder, run_dir);

    stage_ = "embed";
    EncodeOptions options;
    options.proposer = resolved.eval_proposer;
    options.concat = resolved.concat;
    const auto gallery = data.split(Split::kGallery);
    const GalleryIndex index = build_gallery_index(gallery, model, encoder, options);

    stage_ = "retrieve";
    const QuerySet queries = make_query_set(data, spec_.query_split, resolved.heldout_categories);
    if (queries.queries.empty()) throw InputError("no queries to evaluate");
    const auto results = retrieve_all(queries, model, encoder, index, options, spec_.merge);
    write_results((run_dir / "results.jsonl").string(), results);

    stage_ = "evaluate";
    const MetricReport report = evaluate(results, queries.labels, index.categories, spec_.cutoffs);
    write_metric_report((run_dir / "metrics.json").string(), (run_dir / "per_query.csv").string(),
                        report);
    const int n0 = spec_.cutoffs.front();
    log_ << "  mAP@" << n0 << " " << report.mean.at(n0).ap << "  Prec@" << n0 << " "
         << report.mean.at(n0).prec << "  chance " << report.chance_precision << '\n';
    return report;
  }

  Json summarize(const ExperimentOutcome& outcome) const {
    Json j;
    j["experiment"] = spec_.name;
    j["seeds"] = spec_.seeds;
    j["cutoffs"] = spec_.cutoffs;
    j["formulas"] = metric_formula_note();
    Json arms = Json::array();
    for (size_t k = 0; k < outcome.arms.size(); ++k) {
      const auto& ao = outcome.arms[k];
      Json aj;
      aj["name"] = ao.name;
      aj["arm"] = to_json(spec_.arms[k]);
      Json metrics;
      for (int n : spec_.cutoffs) {
        std::vector<double> ap, ar, prec;
        for (const auto& so : ao.seeds) {
          ap.push_back(so.report.mean.at(n).ap);
          ar.push_back(so.report.mean.at(n).ar);
          prec.push_back(so.report.mean.at(n).prec);
        }
        const std::string s = std::to_string(n);
        metrics["mAP@" + s] = summarize_metric(ap);
        metrics["mAR@" + s] = summarize_metric(ar);
        metrics["Prec@" + s] = summarize_metric(prec);
      }
      std::vector<double> chance;
      for (const auto& so : ao.seeds) chance.push_back(so.report.chance_precision);
      metrics["chance_precision"] = summarize_metric(chance);
      aj["metrics"] = std::move(metrics);
      arms.push_back(std::move(aj));
    }
    j["arms"] = std::move(arms);
    return j;
  }

 public:
  std::string stage_ = "setup";
  std::string arm_;
  std::uint64_t seed_ = 0;

 private:
  const ExperimentSpec& spec_;
  std::ostream& log_;
  fs::path root_;
  fs::path cache_;
  std::unique_ptr<DatasetBundle> bundle_;
  std::string bundle_key_;
};

}  // namespace

ExperimentOutcome run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  spec.validate();
  Runner runner(spec, log);
  try {
    return runner.run();
  } catch (const ConfigError& e) {
    runner.record_error("config", e.what());
    throw;
  } catch (const std::exception& e) {
    runner.record_error("runtime", e.what());
    throw;
  }
}

}  // namespace capture
