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

// Batch runner: gen-data -> pretrain -> embed -> retrieve -> evaluate for
// every (arm, seed) of an experiment, plus the report/check layer.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "capture/config_json.hpp"
#include "capture/corpus.hpp"
#include "capture/model.hpp"
#include "capture/pretrain.hpp"
#include "capture/proposer.hpp"
#include "capture/retrieval.hpp"

namespace capture {

// Overrides applied on top of the experiment-wide configs. Unset fields
// inherit.
struct ArmSpec {
  std::string name;
  std::optional<LossSwitches> losses;
  std::optional<std::array<int, 3>> layers;  // L, K, H
  std::optional<Modality> modality;
  std::optional<ProposalMode> proposal_mode;  // gallery and query proposals
  std::optional<bool> concat;
  bool pretrain = true;  // false: evaluate the initialization
  // Zero-shot: share of query categories removed from the train split, or
  // a number of brands whose categories are removed.
  double holdout_fraction = 0.0;
  int holdout_brands = 0;

  bool zero_shot() const { return holdout_fraction > 0.0 || holdout_brands > 0; }
};

struct ExperimentSpec {
  std::string name = "capture";
  CorpusConfig corpus;
  // Train-time proposals (must work without annotations); arms may switch
  // the mode used for gallery and queries.
  ProposerConfig proposer;
  ModelConfig model;
  PretrainConfig pretrain;
  std::vector<int> cutoffs = kDefaultCutoffs;
  MergeMode merge = MergeMode::kMax;
  bool concat = true;
  Split query_split = Split::kTest;
  std::vector<ArmSpec> arms;
  std::string out = "runs";
  std::vector<std::uint64_t> seeds{7};

  // Throws ConfigError.
  void validate() const;
};

Json to_json(const ArmSpec& a);
Json to_json(const ExperimentSpec& s);
void read_json(const Json& j, ArmSpec& a);
void read_json(const Json& j, ExperimentSpec& s);

// Defaults, optionally overridden by a JSON file.
ExperimentSpec load_experiment_spec(const std::string& path);

// Arm matrices.
std::vector<ArmSpec> baseline_arms();
std::vector<ArmSpec> pretext_arms();
std::vector<ArmSpec> layer_arms();
std::vector<ArmSpec> detector_arms();
std::vector<ArmSpec> zeroshot_arms(double fraction = 0.25, int brands = 0);
std::vector<ArmSpec> arms_for(const std::string& ablation);

// Resolved per-(arm, seed) configuration.
struct RunPlan {
  CorpusConfig corpus;
  ProposerConfig train_proposer;
  ProposerConfig eval_proposer;
  ModelConfig model;
  PretrainConfig pretrain;
  bool pretrain_enabled = true;
  bool concat = true;
  std::vector<int> heldout_categories;
};

RunPlan plan_run(const ExperimentSpec& spec, const ArmSpec& arm, std::uint64_t seed,
                 const DatasetBundle* base = nullptr);

// Zero-shot holdout: categories removed from training, drawn from the
// query-reachable ones.
std::vector<int> choose_heldout_categories(const DatasetBundle& bundle, double fraction,
                                           int brands, std::uint64_t seed);

// Training pairs from the train split using `proposer` (no annotations).
std::vector<TrainingExample> make_training_examples(const DatasetBundle& bundle,
                                                    const CaptureModel& model,
                                                    const ProposerConfig& proposer,
                                                    const RegionEncoder& encoder);

struct QuerySet {
  std::vector<const Sample*> queries;
  std::map<int, std::vector<int>> labels;
};

// Multi-product queries of `split`. When `restrict_to` is non-empty only
// queries holding one of those categories are kept and their labels are
// intersected with it.
QuerySet make_query_set(const DatasetBundle& bundle, Split split,
                        const std::vector<int>& restrict_to = {});

std::vector<RetrievalResult> retrieve_all(const QuerySet& queries, const CaptureModel& model,
                                          const RegionEncoder& encoder, const GalleryIndex& index,
                                          const EncodeOptions& options, MergeMode merge);

// Gallery embeddings as JSON lines {"id","category","embedding"}.
void write_gallery_index(const std::string& path, const GalleryIndex& index);
GalleryIndex read_gallery_index(const std::string& path);

struct SeedOutcome {
  std::uint64_t seed = 0;
  MetricReport report;
};

struct ArmOutcome {
  std::string name;
  std::vector<SeedOutcome> seeds;
};

struct ExperimentOutcome {
  std::vector<ArmOutcome> arms;
  Json summary;
};

// Stage failure: partial results stay on disk and `error.json` records the
// stage, arm, seed and message before the exception is rethrown.
ExperimentOutcome run_experiment(const ExperimentSpec& spec, std::ostream& log);

// mean/std/median/values of one metric across the seeds of an arm.
Json summarize_metric(const std::vector<double>& values);
double median(std::vector<double> values);

// ---- report.cpp ----

struct CheckResult {
  std::string name;
  bool passed = false;
  bool gating = true;
  std::string detail;
};

// Reads every summary.json below `root` and writes report.md plus one SVG
// bar chart per summary.
std::vector<std::string> write_report(const std::string& root);

// Acceptance checks that can be decided from the summaries present.
std::vector<CheckResult> check_summaries(const std::string& root);

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::vector<double>& errors);

}  // namespace capture
