/* Copyright 2026 The shiftq Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "shiftq/cli.h"
#include "shiftq/model.h"

namespace shiftq {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "shiftq");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("shiftq_cli_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string config(const std::string& extra = "") {
    const fs::path p = dir_ / "run.ini";
    std::ofstream(p) << "[data]\ntrain_samples = 300\ntest_samples = 200\n"
                        "dim = 8\nseparation = 3\n"
                        "[model]\nhidden = 12, 10, 8\n"
                        "[train]\npretrain_epochs = 3\n"
                     << extra;
    return p.string();
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"pretrain", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  EXPECT_EQ(run({"macbench", "--word-width", "48"}).code, kExitUsage);
  EXPECT_EQ(run({"macbench", "--s-bits", "5"}).code, kExitUsage);
  const fs::path bad = dir_ / "bad.ini";
  std::ofstream(bad) << "[train]\nwhatever = 1\n";
  const CliRun r = run({"pretrain", "--config", bad.string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("unknown key"), std::string::npos);
}

TEST_F(CliTest, PretrainWritesCheckpointDeterministically) {
  const std::string cfg = config();
  const fs::path a = dir_ / "a", b = dir_ / "b";
  EXPECT_EQ(run({"pretrain", "--config", cfg, "--out", a.string()}).code, kExitOk);
  EXPECT_TRUE(fs::exists(a / "pretrained.json"));
  EXPECT_EQ(run({"pretrain", "--config", cfg, "--out", b.string()}).code, kExitOk);
  const std::string metrics = slurp(a / "pretrain_metrics.csv");
  EXPECT_EQ(metrics, slurp(b / "pretrain_metrics.csv"));
  const auto rows = csv_rows(metrics);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"stage_lambda", "epoch", "loss",
                                               "acc_lambda", "acc_zero", "layer",
                                               "grad_raw", "grad_scaled"}));
  run({"pretrain", "--config", cfg, "--out", b.string(), "--seed", "9"});
  EXPECT_NE(metrics, slurp(b / "pretrain_metrics.csv"));
}

TEST_F(CliTest, MissingDatasetIsDataError) {
  const fs::path p = dir_ / "idx.ini";
  std::ofstream(p) << "[data]\nsource = idx\ntrain_images = /nonexistent/a\n"
                      "train_labels = /nonexistent/b\ntest_images = /nonexistent/c\n"
                      "test_labels = /nonexistent/d\n";
  const CliRun r = run({"pretrain", "--config", p.string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("dataset missing"), std::string::npos);
}

TEST_F(CliTest, FinetuneEmitsFifteenEpochCurve) {
  const fs::path out = dir_ / "ft";
  const CliRun r = run({"finetune", "--config", config(), "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto curve = csv_rows(slurp(out / "curve.csv"));
  ASSERT_EQ(curve.size(), 16u);
  EXPECT_EQ(curve[0].back(), "gap");
  EXPECT_EQ(curve[1][0], "1");
  EXPECT_EQ(curve[15][0], "0.0078125");
  EXPECT_EQ(curve[15][1], "15");
  const auto metrics = csv_rows(slurp(out / "metrics.csv"));
  std::set<std::string> layers;
  for (std::size_t i = 1; i < metrics.size(); ++i) layers.insert(metrics[i][5]);
  EXPECT_EQ(layers, (std::set<std::string>{"L0.w", "L1.w", "L1.a", "L2.w", "L2.a"}));
  EXPECT_TRUE(fs::exists(out / "finetuned.json"));

  const CliRun ev = run({"eval", "--config", config(), "--out", out.string(),
                      "--lambda", "0"});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  EXPECT_NE(ev.out.find("bitexact_accuracy="), std::string::npos);
  EXPECT_EQ(run({"eval", "--config", config(), "--out", out.string(),
                 "--lambda", "2"}).code,
            kExitUsage);

  const CliRun ex = run({"export", "--config", config(), "--out", out.string()});
  ASSERT_EQ(ex.code, kExitOk) << ex.err;
  const PackedModel pm = read_packed(out / "model.shqp");
  EXPECT_EQ(pm.quantized.size(), 2u);
}

TEST_F(CliTest, FinetuneFromCheckpoint) {
  const std::string cfg = config();
  const fs::path out = dir_ / "x";
  ASSERT_EQ(run({"pretrain", "--config", cfg, "--out", out.string()}).code, kExitOk);
  const CliRun r = run({"finetune", "--config", cfg, "--out", out.string(),
                     "--checkpoint", (out / "pretrained.json").string(),
                     "--s-bits", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Model m = load_checkpoint(out / "finetuned.json");
  EXPECT_EQ(m.layers[1].weight_spec.bits(), 1);
  EXPECT_EQ(run({"finetune", "--config", cfg, "--checkpoint",
                 (dir_ / "none.json").string()}).code,
            kExitData);
}

TEST_F(CliTest, DivergenceExitCode) {
  const CliRun r = run({"finetune", "--config",
                     config("[schedule]\nstages = 1:1:0.01, 0.5:1:1e300\n"),
                     "--out", dir_.string()});
  EXPECT_EQ(r.code, kExitDivergence);
  EXPECT_NE(r.err.find("stage lambda=0.5"), std::string::npos);
}

TEST_F(CliTest, MacbenchChecksumsAgree) {
  const CliRun r = run({"macbench", "--s-bits", "3", "--length", "257",
                     "--trials", "5", "--out", dir_.string()});
  ASSERT_EQ(r.code, kExitOk);
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[1][0], "oracle");
  EXPECT_EQ(rows[1][6], rows[2][6]);
  EXPECT_EQ(rows[1][6], rows[3][6]);
  EXPECT_EQ(rows[4][0], "bank");
  EXPECT_EQ(rows[4][1], "0");
  EXPECT_EQ(rows[5][0], "xnor_popcount");
  EXPECT_EQ(rows[4][6], rows[5][6]);
  EXPECT_EQ(slurp(dir_ / "macbench.csv"), r.out);

  // A single code pair never multiplies to zero, so the checksum must be
  // read after the kernel ran.
  const CliRun one = run({"macbench", "--length", "1", "--trials", "1"});
  ASSERT_EQ(one.code, kExitOk);
  for (std::size_t i = 1; i < csv_rows(one.out).size(); ++i) {
    EXPECT_NE(csv_rows(one.out)[i][6], "0") << csv_rows(one.out)[i][0];
  }

  const CliRun empty = run({"macbench", "--length", "0", "--trials", "3"});
  ASSERT_EQ(empty.code, kExitOk);
  for (std::size_t i = 1; i < csv_rows(empty.out).size(); ++i) {
    EXPECT_EQ(csv_rows(empty.out)[i][5], "0");
    EXPECT_EQ(csv_rows(empty.out)[i][6], "0");
  }
}

TEST_F(CliTest, FndumpCurves) {
  const CliRun id = run({"fndump", "--lambda", "1", "--samples", "101"});
  ASSERT_EQ(id.code, kExitOk);
  const auto rows = csv_rows(id.out);
  ASSERT_EQ(rows.size(), 102u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][0], rows[i][1]);
    EXPECT_EQ(rows[i][2], "1");
  }

  const CliRun q = run({"fndump", "--lambda", "0", "--s-bits", "2", "--x-min",
                     "-1", "--x-max", "1", "--samples", "2001"});
  ASSERT_EQ(q.code, kExitOk);
  std::set<std::string> values;
  for (const auto& row : csv_rows(q.out)) {
    if (row[0] == "x") continue;
    values.insert(row[1]);
    EXPECT_EQ(row[2], "0");
  }
  EXPECT_EQ(values.size(), 8u);

  const CliRun h = run({"fndump", "--lambda", "0.25", "--mode", "uniform",
                     "--s-bits", "3", "--out", dir_.string()});
  ASSERT_EQ(h.code, kExitOk);
  for (const auto& row : csv_rows(slurp(dir_ / "fndump.csv"))) {
    if (row[0] != "x") {
      EXPECT_EQ(row[2], "0.25");
    }
  }
  EXPECT_EQ(run({"fndump", "--mode", "cubic"}).code, kExitUsage);
}

}  // namespace
}  // namespace shiftq
