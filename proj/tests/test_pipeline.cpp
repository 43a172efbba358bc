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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "capture/config_json.hpp"
#include "capture/experiment.hpp"

namespace capture {
namespace {
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ModelConfig small_model(int vocab) {
  ModelConfig c;
  c.L = c.K = c.H = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.d_head_out = 8;
  c.vocab_size = vocab;
  return c;
}

ExperimentSpec tiny_spec(const fs::path& out) {
  ExperimentSpec s;
  s.name = "tiny";
  s.corpus.split_sizes = {60, 5, 12, 40};
  s.model = small_model(0);
  s.pretrain.epochs = 1;
  s.pretrain.batch_size = 16;
  s.cutoffs = {10};
  s.out = out.string();
  return s;
}

TEST(Checkpoint, RoundTripKeepsFloat32Values) {
  const auto dir = fresh_dir("capture_ckpt");
  CaptureModel m(small_model(30));
  const auto path = (dir / "m.ckpt").string();
  save_checkpoint(m, path);
  const CaptureModel back = load_checkpoint(path);
  EXPECT_EQ(back.config().L, 1);
  EXPECT_EQ(back.config().vocab_size, 30);
  ASSERT_EQ(back.params().entries().size(), m.params().entries().size());
  for (size_t i = 0; i < m.params().entries().size(); ++i) {
    const auto& a = m.params().entries()[i];
    const auto& b = back.params().entries()[i];
    EXPECT_EQ(a.name, b.name);
    const Matrix rounded = a.value.cast<float>().cast<double>();
    EXPECT_EQ(rounded, b.value) << a.name;
  }
  // A second save of the reloaded model is byte-identical.
  save_checkpoint(back, (dir / "n.ckpt").string());
  EXPECT_EQ(slurp(dir / "m.ckpt"), slurp(dir / "n.ckpt"));
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = fresh_dir("capture_ckpt_bad");
  {
    std::ofstream os(dir / "bad.ckpt", std::ios::binary);
    os << "P1MCKPTX garbage";
  }
  EXPECT_THROW(load_checkpoint((dir / "bad.ckpt").string()), FormatError);
  CaptureModel m(small_model(30));
  save_checkpoint(m, (dir / "ok.ckpt").string());
  std::string bytes = slurp(dir / "ok.ckpt");
  bytes.resize(bytes.size() - 64);
  {
    std::ofstream os(dir / "short.ckpt", std::ios::binary);
    os << bytes;
  }
  EXPECT_THROW(load_checkpoint((dir / "short.ckpt").string()), FormatError);
  fs::remove_all(dir);
}

TEST(ConfigJson, RoundTripsAndRejectsUnknownKeys) {
  ModelConfig m;
  m.L = 3;
  m.modality = Modality::kTextOnly;
  ModelConfig back;
  read_json(to_json(m), back);
  EXPECT_EQ(to_json(back), to_json(m));

  CorpusConfig c;
  c.excluded_train_categories = {1, 4};
  c.caption_noise.abbreviation_prob = 0.5;
  CorpusConfig cback;
  read_json(to_json(c), cback);
  EXPECT_EQ(to_json(cback), to_json(c));

  PretrainConfig p;
  p.losses.itm = true;
  PretrainConfig pback;
  read_json(to_json(p), pback);
  EXPECT_EQ(pback.losses, p.losses);

  Json bad = to_json(ProposerConfig{});
  bad["anchor_sizes"] = 3;
  ProposerConfig pc;
  EXPECT_THROW(read_json(bad, pc), ConfigError);
  Json wrong_type = to_json(ModelConfig{});
  wrong_type["L"] = "two";
  EXPECT_THROW(read_json(wrong_type, back), ConfigError);
}

TEST(ExperimentSpec, JsonRoundTrip) {
  ExperimentSpec s;
  s.arms = zeroshot_arms(0.25, 2);
  s.seeds = {1, 2, 3};
  s.merge = MergeMode::kMean;
  ExperimentSpec back;
  read_json(to_json(s), back);
  EXPECT_EQ(to_json(back), to_json(s));
  Json extra = to_json(s);
  extra["arms"][0]["colour"] = "red";
  EXPECT_THROW(read_json(extra, back), ConfigError);
}

TEST(ExperimentSpec, Validation) {
  ExperimentSpec s;
  s.arms = baseline_arms();
  EXPECT_NO_THROW(s.validate());
  s.proposer.mode = ProposalMode::kOracle;
  EXPECT_THROW(s.validate(), ConfigError);
  s = ExperimentSpec{};
  s.arms = {baseline_arms()[0], baseline_arms()[0]};
  EXPECT_THROW(s.validate(), ConfigError);
  s = ExperimentSpec{};
  s.arms = baseline_arms();
  s.query_split = Split::kTrain;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(arms_for("everything"), ConfigError);
}

TEST(Arms, Matrices) {
  const auto pretext = pretext_arms();
  ASSERT_EQ(pretext.size(), 5u);
  EXPECT_TRUE(pretext[2].losses->itm);
  EXPECT_FALSE(pretext[2].losses->ctr);
  EXPECT_TRUE(*pretext[4].concat);
  EXPECT_TRUE(pretext[4].losses->ctr);
  EXPECT_FALSE(*pretext[0].concat);

  const std::vector<std::array<int, 3>> want{{6, 0, 6}, {6, 6, 0}, {0, 6, 6}, {2, 5, 5}, {5, 2, 5},
                                             {5, 5, 2}, {2, 2, 2}, {8, 8, 8}, {4, 4, 4}};
  const auto layers = layer_arms();
  ASSERT_EQ(layers.size(), want.size());
  for (size_t i = 0; i < want.size(); ++i) EXPECT_EQ(*layers[i].layers, want[i]);

  std::vector<ProposalMode> modes;
  for (const auto& a : detector_arms()) modes.push_back(*a.proposal_mode);
  EXPECT_EQ(modes, (std::vector<ProposalMode>{ProposalMode::kOracle, ProposalMode::kJitter,
                                              ProposalMode::kWholeImage}));
  for (const auto& a : zeroshot_arms()) EXPECT_TRUE(a.zero_shot());
}

TEST(ZeroShot, HoldoutAvoidsDistractorsAndTrainSplit) {
  CorpusConfig c;
  c.split_sizes = {80, 5, 30, 40};
  const auto base = build_dataset(c);
  const auto held = choose_heldout_categories(base, 0.25, 0, 7);
  EXPECT_EQ(held.size(), 5u);
  for (int h : held)
    EXPECT_FALSE(std::binary_search(base.distractor_categories.begin(),
                                    base.distractor_categories.end(), h));
  EXPECT_EQ(held, choose_heldout_categories(base, 0.25, 0, 7));

  ExperimentSpec spec;
  spec.corpus = c;
  const auto plan = plan_run(spec, zeroshot_arms()[0], 7, nullptr);
  EXPECT_EQ(plan.heldout_categories, plan.corpus.excluded_train_categories);
  EXPECT_FALSE(plan.heldout_categories.empty());

  const auto q = make_query_set(base, Split::kTest, held);
  const std::set<int> keep(held.begin(), held.end());
  for (const auto* s : q.queries) {
    const auto& labels = q.labels.at(s->id());
    EXPECT_FALSE(labels.empty());
    for (int l : labels) EXPECT_TRUE(keep.count(l));
  }
  const auto all = make_query_set(base, Split::kTest);
  EXPECT_EQ(all.queries.size(), 30u);
  EXPECT_LE(q.queries.size(), all.queries.size());
}

TEST(Gallery, BuildIsDeterministicAndRoundTrips) {
  CorpusConfig c;
  c.split_sizes = {10, 2, 4, 40};
  const auto data = build_dataset(c);
  CaptureModel model(small_model(data.catalog.vocab.size()));
  ProposerConfig pc;
  RegionEncoder enc(pc);
  EncodeOptions opt;
  opt.proposer = pc;
  const auto gallery = data.split(Split::kGallery);
  const auto a = build_gallery_index(gallery, model, enc, opt);
  const auto b = build_gallery_index(gallery, model, enc, opt);
  EXPECT_EQ(a.embeddings.rows(), 40);
  EXPECT_EQ(a.embeddings, b.embeddings);
  for (int i = 0; i < a.embeddings.rows(); ++i) EXPECT_NEAR(a.embeddings.row(i).norm(), 1.0, 1e-9);

  const auto dir = fresh_dir("capture_gallery");
  write_gallery_index((dir / "g.jsonl").string(), a);
  const auto back = read_gallery_index((dir / "g.jsonl").string());
  EXPECT_EQ(back.ids, a.ids);
  EXPECT_EQ(back.categories, a.categories);
  EXPECT_LT((back.embeddings - a.embeddings).cwiseAbs().maxCoeff(), 1e-12);
  fs::remove_all(dir);
}

TEST(Experiment, TinyRunIsByteReproducible) {
  const auto dir = fresh_dir("capture_exp_det");
  std::ostringstream log;
  for (const char* sub : {"a", "b"}) {
    auto spec = tiny_spec(dir / sub);
    spec.arms = pretext_arms();
    spec.seeds = {3};
    const auto outcome = run_experiment(spec, log);
    ASSERT_EQ(outcome.arms.size(), 5u);
  }
  for (const auto& arm : pretext_arms()) {
    const auto rel = fs::path("tiny") / arm.name / "seed_3";
    for (const char* f : {"metrics.json", "per_query.csv", "results.jsonl", "loss.csv"})
      EXPECT_EQ(slurp(dir / "a" / rel / f), slurp(dir / "b" / rel / f)) << arm.name << "/" << f;
  }
  EXPECT_EQ(slurp(dir / "a/tiny/summary.json"), slurp(dir / "b/tiny/summary.json"));
  EXPECT_EQ(slurp(dir / "a/tiny/spec.json"), slurp(dir / "b/tiny/spec.json"));

  const auto written = write_report((dir / "a").string());
  EXPECT_TRUE(fs::exists(dir / "a/report.md"));
  EXPECT_TRUE(fs::exists(dir / "a/tiny/chart.svg"));
  EXPECT_EQ(written.size(), 2u);
  const auto checks = check_summaries((dir / "a").string());
  ASSERT_EQ(checks.size(), 2u);
  EXPECT_TRUE(checks[0].gating);
  EXPECT_FALSE(checks[1].gating);
  fs::remove_all(dir);
}

TEST(Experiment, SharedCheckpointAcrossDetectorArms) {
  const auto dir = fresh_dir("capture_exp_det_arms");
  std::ostringstream log;
  auto spec = tiny_spec(dir);
  spec.arms = detector_arms();
  run_experiment(spec, log);
  std::set<std::string> ckpts;
  for (const auto& arm : detector_arms())
    ckpts.insert(slurp(dir / "tiny" / arm.name / "seed_7" / "checkpoint.txt"));
  EXPECT_EQ(ckpts.size(), 1u);
  fs::remove_all(dir);
}

TEST(Experiment, FailureLeavesErrorRecord) {
  const auto dir = fresh_dir("capture_exp_err");
  auto spec = tiny_spec(dir);
  spec.arms = baseline_arms();
  spec.corpus.image_size = 8;
  spec.corpus.min_instances = spec.corpus.max_instances = 4;
  spec.corpus.max_overlap_iou = 0.0;
  spec.corpus.placement_retries = 1;
  std::ostringstream log;
  EXPECT_THROW(run_experiment(spec, log), std::exception);
  const auto err = Json::parse(slurp(dir / "tiny" / "error.json"));
  EXPECT_EQ(err.at("stage"), "gen-data");
  EXPECT_EQ(err.at("arm"), "capture");
  EXPECT_EQ(err.at("seed"), 7);
  EXPECT_FALSE(err.at("message").get<std::string>().empty());
  fs::remove_all(dir);
}

TEST(Summary, MedianAndSpread) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0}), 2.5);
  const auto j = summarize_metric({1.0, 2.0, 6.0});
  EXPECT_DOUBLE_EQ(j.at("mean").get<double>(), 3.0);
  EXPECT_DOUBLE_EQ(j.at("median").get<double>(), 2.0);
  EXPECT_EQ(j.at("values").size(), 3u);
}

TEST(Report, ChartIsSvg) {
  const auto svg = bar_chart_svg("a<b", {"x", "y"}, {0.5, 0.25}, {0.1, 0.0});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 4, true);
}

}  // namespace
}  // namespace capture
