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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "json.hpp"

namespace {
namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(CAPTURE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "capture_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.json")
        << R"({"corpus": {"split_sizes": {"train": 40, "val": 5, "test": 10, "gallery": 40}},)"
        << R"( "pretrain": {"epochs": 1, "batch_size": 16},)"
        << R"( "model": {"L": 1, "K": 1, "H": 1, "d_model": 16, "n_heads": 2, "d_ff": 32}})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string flags() const {
    return "--config " + (dir_ / "tiny.json").string() + " --out " + (dir_ / "out").string();
  }
  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("ablate sideways"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, BadConfigExitsOne) {
  std::ofstream(dir_ / "bad.json") << R"({"model": {"depth": 3}})";
  EXPECT_EQ(run("--config " + (dir_ / "bad.json").string() + " --out " + dir_.string() +
                " gen-data"),
            1);
  std::ofstream(dir_ / "broken.json") << "{ not json";
  EXPECT_EQ(run("--config " + (dir_ / "broken.json").string() + " --out " + dir_.string() +
                " gen-data"),
            1);
}

TEST_F(Cli, MissingInputExitsTwoWithRecord) {
  EXPECT_EQ(run(flags() + " evaluate"), 2);
  std::ifstream is(dir_ / "out" / "error.json");
  ASSERT_TRUE(is.good());
  const auto j = nlohmann::json::parse(is);
  EXPECT_EQ(j.at("stage"), "evaluate");
}

TEST_F(Cli, StagesChainEndToEnd) {
  ASSERT_EQ(run(flags() + " gen-data"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "out/data/manifest.jsonl"));
  ASSERT_EQ(run(flags() + " pretrain"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "out/checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir_ / "out/loss.csv"));
  ASSERT_EQ(run(flags() + " embed"), 0);
  ASSERT_EQ(run(flags() + " retrieve"), 0);
  ASSERT_EQ(run(flags() + " evaluate --cutoffs 5,10"), 0);
  std::ifstream is(dir_ / "out/metrics.json");
  const auto m = nlohmann::json::parse(is);
  EXPECT_TRUE(m.contains("mAP@5"));
  EXPECT_TRUE(m.contains("Prec@10"));
  EXPECT_EQ(run(flags() + " eval-single --cutoffs 5"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "out/single_metrics.json"));
}

TEST_F(Cli, ReportWithoutSummariesIsMissingInput) {
  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(run("--out " + (dir_ / "empty").string() + " report --check"), 2);
}

// Hand-written summary whose detector arms are out of order.
TEST_F(Cli, FailedGatingCheckExitsThree) {
  auto arm = [](const char* name, double v) {
    nlohmann::json stat = {{"mean", v}, {"std", 0.0}, {"median", v}, {"values", {v}}};
    nlohmann::json metrics = {{"mAP@10", stat}, {"mAR@10", stat}, {"Prec@10", stat},
                              {"chance_precision", stat}};
    return nlohmann::json{{"name", name}, {"metrics", metrics}};
  };
  nlohmann::json summary = {{"experiment", "detector"},
                            {"seeds", {7}},
                            {"cutoffs", {10}},
                            {"arms", {arm("oracle", 0.3), arm("jitter", 0.4), arm("whole_image", 0.1)}}};
  fs::create_directories(dir_ / "runs/detector");
  std::ofstream(dir_ / "runs/detector/summary.json") << summary.dump();
  EXPECT_EQ(run("--out " + (dir_ / "runs").string() + " report --check"), 3);
  EXPECT_TRUE(fs::exists(dir_ / "runs/report.md"));

  summary["arms"][1] = arm("jitter", 0.2);
  std::ofstream(dir_ / "runs/detector/summary.json") << summary.dump();
  EXPECT_EQ(run("--out " + (dir_ / "runs").string() + " report --check"), 0);
}

}  // namespace
