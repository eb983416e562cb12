// Copyright 2026 The SCR Authors
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

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scr/commands.hpp"

namespace scr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("scr_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("SCR_OUT_DIR");
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const json& doc, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    write_text_file(p, doc.dump(2));
    return p;
  }

  int invoke(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"scr"};
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  std::string read(const fs::path& p) const { return read_text_file(p); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

json two_state_document(double gamma) {
  TabularMdp mdp(2, 1, gamma);
  mdp.p(0, 0, 0) = 1.0;
  mdp.p(1, 0, 1) = 1.0;
  mdp.reward(0, 0) = 1.0;
  return to_json(mdp);
}

// Small enough to train in well under a second.
json tiny_trainer(std::size_t steps) {
  return {{"n_dim", 4}, {"iqe_k", 2},   {"hidden", 8},        {"batch", 16},
          {"steps", steps}, {"horizon", 10}, {"eval_every", 10}, {"n_trajectories", 8}};
}

json tiny_train_config() {
  return {{"seed", 3},
          {"mdp", {{"source", "random"}, {"n_states", 4}, {"n_actions", 2}, {"support", 2}, {"seed", 1}}},
          {"trainer", tiny_trainer(30)},
          {"oracle", {{"held_out", 200}}}};
}

TEST_F(CliTest, MissingConfigFileIsConfigError) {
  EXPECT_EQ(invoke({"exact", "--config", (dir_ / "absent.json").string()}), kConfigError);
  EXPECT_NE(err_.str().find("not found"), std::string::npos) << err_.str();
}

TEST_F(CliTest, MissingSubcommandOrRequiredConfigIsConfigError) {
  EXPECT_EQ(invoke({}), kConfigError);
  EXPECT_EQ(invoke({"train"}), kConfigError);
  EXPECT_EQ(invoke({"bogus"}), kConfigError);
}

TEST_F(CliTest, UnknownKeyIsRejected) {
  json doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.9)}}}, {"trainer", {{"n_dims", 4}}}};
  EXPECT_EQ(invoke({"exact", "--config", write_config(doc).string(), "--out", (dir_ / "o").string()}), kConfigError);
  EXPECT_NE(err_.str().find("unknown key 'n_dims'"), std::string::npos) << err_.str();
}

TEST_F(CliTest, MalformedJsonAndInvalidValuesAreConfigErrors) {
  write_text_file(dir_ / "bad.json", "{\"mdp\": ");
  EXPECT_EQ(invoke({"exact", "--config", (dir_ / "bad.json").string()}), kConfigError);

  json doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(1.0)}}}};
  EXPECT_EQ(invoke({"exact", "--config", write_config(doc).string()}), kConfigError);

  doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.9)}}}, {"oracle", {{"tol", 0.0}}}};
  EXPECT_EQ(invoke({"exact", "--config", write_config(doc).string()}), kConfigError);

  doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.9)}}},
         {"trainer", {{"optimizer", "rmsprop"}}}};
  EXPECT_EQ(invoke({"train", "--config", write_config(doc).string()}), kConfigError);
}

TEST_F(CliTest, ExactOnTwoStateAbsorbingMdp) {
  json doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.9)}}}, {"policy", {{"kind", "uniform"}}}};
  const fs::path out = dir_ / "exact";
  ASSERT_EQ(invoke({"exact", "--config", write_config(doc).string(), "--out", out.string()}), kOk) << err_.str();
  for (const char* f : {"mico.csv", "bisim.csv", "chrono_k.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;

  std::istringstream mico(read(out / "mico.csv"));
  const Matrix m = read_metric_csv(mico);
  EXPECT_NEAR(m(0, 1), 10.0, 1e-8);
  EXPECT_NEAR(m(1, 0), 10.0, 1e-8);
  EXPECT_EQ(m(0, 0), 0.0);

  std::istringstream bisim(read(out / "bisim.csv"));
  EXPECT_NEAR(read_metric_csv(bisim)(0, 1), 10.0, 1e-8);

  const json manifest = json::parse(read(out / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "exact");
  EXPECT_LE(manifest.at("results").at("mico").at("residual").get<double>(), 1e-10);
  EXPECT_FALSE(manifest.at("config").contains("out"));
  EXPECT_EQ(manifest.at("config").at("oracle").at("K"), 10);
}

TEST_F(CliTest, ExactWithZeroDiscountIsRewardGap) {
  json doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.0)}}}};
  const fs::path out = dir_ / "exact";
  ASSERT_EQ(invoke({"exact", "--config", write_config(doc).string(), "--out", out.string()}), kOk) << err_.str();
  EXPECT_EQ(read(out / "mico.csv"), "x,y,value\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n");
  EXPECT_EQ(read(out / "bisim.csv"), "x,y,value\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n");
}

TEST_F(CliTest, IterationCapGivesNonConvergence) {
  json doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.9)}}}, {"oracle", {{"max_iter", 3}}}};
  EXPECT_EQ(invoke({"exact", "--config", write_config(doc).string(), "--out", (dir_ / "o").string()}),
            kNonConvergence);
  EXPECT_NE(err_.str().find("error"), std::string::npos);
}

TEST_F(CliTest, ExplodingTrainingGivesDivergence) {
  json doc = tiny_train_config();
  doc["trainer"]["optimizer"] = "sgd";
  doc["trainer"]["lr"] = 1e4;
  EXPECT_EQ(invoke({"train", "--config", write_config(doc).string(), "--out", (dir_ / "o").string()}), kDivergence)
      << err_.str();
}

TEST_F(CliTest, TrainWritesReportSummaryAndCheckpoint) {
  const fs::path out = dir_ / "train";
  ASSERT_EQ(invoke({"train", "--config", write_config(tiny_train_config()).string(), "--out", out.string()}), kOk)
      << err_.str();
  EXPECT_NE(out_.str().find("final mae"), std::string::npos);

  std::istringstream report(read(out / "report.csv"));
  std::string line;
  std::getline(report, line);
  EXPECT_EQ(line, "step,loss_phi,loss_psi,loss_low,loss_up,total,mae,rank_corr");
  std::vector<std::string> rows;
  while (std::getline(report, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 31u);
  EXPECT_EQ(rows[0].rfind("0,,,,,,", 0), 0u);
  EXPECT_EQ(rows[5].back(), ',');             // step 5: no snapshot
  EXPECT_NE(rows[10].back(), ',');            // step 10: snapshot
  EXPECT_EQ(rows[30].rfind("30,", 0), 0u);

  const json summary = json::parse(read(out / "summary.json"));
  EXPECT_EQ(summary.at("final").at("step"), 30);
  EXPECT_EQ(summary.at("constraints").at("samples"), 200);
  EXPECT_EQ(summary.at("config").at("seed"), 3);
}

TEST_F(CliTest, ZeroStepsReportsOnlyTheInitialSnapshot) {
  json doc = tiny_train_config();
  doc["trainer"]["steps"] = 0;
  const fs::path out = dir_ / "train";
  ASSERT_EQ(invoke({"train", "--config", write_config(doc).string(), "--out", out.string()}), kOk) << err_.str();
  const std::string report = read(out / "report.csv");
  const auto second = report.find('\n') + 1;
  EXPECT_EQ(report.substr(second, 7), "0,,,,,,");
  EXPECT_EQ(report.find('\n', second), report.size() - 1);
}

TEST_F(CliTest, CheckpointRoundTrips) {
  const fs::path out = dir_ / "train";
  ASSERT_EQ(invoke({"train", "--config", write_config(tiny_train_config()).string(), "--out", out.string()}), kOk);
  const json ckpt = json::parse(read(out / "checkpoint.json"));
  const ScrModel model = model_from_checkpoint(ckpt);
  EXPECT_EQ(model.params.step, 30u);
  EXPECT_EQ(checkpoint_json(model), ckpt);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  const fs::path cfg = write_config(tiny_train_config());
  ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--out", (dir_ / "a").string()}), kOk);
  ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--out", (dir_ / "b").string()}), kOk);
  for (const char* f : {"report.csv", "summary.json", "checkpoint.json"}) {
    EXPECT_EQ(read(dir_ / "a" / f), read(dir_ / "b" / f)) << f;
  }
  ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--seed", "4", "--out", (dir_ / "c").string()}), kOk);
  EXPECT_NE(read(dir_ / "a" / "checkpoint.json"), read(dir_ / "c" / "checkpoint.json"));
  EXPECT_EQ(json::parse(read(dir_ / "c" / "summary.json")).at("config").at("seed"), 4);
}

TEST_F(CliTest, OracleOnRewardChain) {
  json doc = {{"mdp", {{"source", "inline"}, {"document", to_json(verify::reward_chain())}}},
              {"policy", {{"kind", "uniform"}}},
              {"oracle", {{"k_max", 3}, {"policies", 7}}}};
  const fs::path out = dir_ / "oracle";
  ASSERT_EQ(invoke({"oracle", "--config", write_config(doc).string(), "--out", out.string()}), kOk) << err_.str();

  const std::string cr = read(out / "conditioned_returns.csv");
  EXPECT_EQ(cr.rfind("policy,x,y,k,endpoint_prob,conditioned_return\n", 0), 0u);
  EXPECT_NE(cr.find("\nconfigured,0,2,2,1,2.75\n"), std::string::npos);
  EXPECT_NE(cr.find("\nconfigured,2,0,3,0,unreachable\n"), std::string::npos);
  EXPECT_NE(cr.find("\noptimal,0,2,2,1,2.75\n"), std::string::npos);
  // 2 policies x 4 step counts x 9 pairs, plus the header.
  EXPECT_EQ(std::count(cr.begin(), cr.end(), '\n'), 73);

  const std::string vr = read(out / "violation_rates.csv");
  EXPECT_EQ(vr.rfind("policy,checked,violations,skipped,violation_rate\n", 0), 0u);
  EXPECT_EQ(std::count(vr.begin(), vr.end(), '\n'), 8);

  const json m = json::parse(read(out / "oracle_manifest.json"));
  EXPECT_EQ(m.at("lower_bound_sweep").at("policies"), 7);
}

TEST_F(CliTest, OracleSweepDefaultsToHundredPolicies) {
  json doc = {{"mdp", {{"source", "random"}, {"n_states", 4}, {"n_actions", 2}, {"support", 2}}}};
  const fs::path out = dir_ / "oracle";
  ASSERT_EQ(invoke({"oracle", "--config", write_config(doc).string(), "--out", out.string()}), kOk) << err_.str();
  const std::string vr = read(out / "violation_rates.csv");
  EXPECT_EQ(std::count(vr.begin(), vr.end(), '\n'), 101);
}

TEST_F(CliTest, FileSourceResolvesAgainstConfigDirectory) {
  fs::create_directories(dir_ / "cfg");
  write_text_file(dir_ / "cfg" / "mdp.json", two_state_document(0.9).dump());
  json doc = {{"mdp", {{"source", "file"}, {"path", "mdp.json"}}}};
  const fs::path out = dir_ / "exact";
  EXPECT_EQ(invoke({"exact", "--config", write_config(doc, "cfg/run.json").string(), "--out", out.string()}), kOk)
      << err_.str();
  EXPECT_TRUE(fs::exists(out / "mico.csv"));
}

TEST_F(CliTest, OutputDirectoryPrecedence) {
  Options opt;
  EXPECT_EQ(output_dir(opt, ""), fs::path("scr_out"));
  EXPECT_EQ(output_dir(opt, "runs/a"), fs::path("runs/a"));
  setenv("SCR_OUT_DIR", "/tmp/root", 1);
  EXPECT_EQ(output_dir(opt, ""), fs::path("/tmp/root"));
  EXPECT_EQ(output_dir(opt, "runs/a"), fs::path("/tmp/root/runs/a"));
  EXPECT_EQ(output_dir(opt, "/abs/b"), fs::path("/abs/b"));
  opt.out = "cli_dir";
  EXPECT_EQ(output_dir(opt, "runs/a"), fs::path("cli_dir"));
  unsetenv("SCR_OUT_DIR");
}

TEST_F(CliTest, ConfigOutIsUsedWithoutFlag) {
  json doc = {{"mdp", {{"source", "inline"}, {"document", two_state_document(0.0)}}},
              {"out", (dir_ / "from_config").string()}};
  ASSERT_EQ(invoke({"exact", "--config", write_config(doc).string()}), kOk) << err_.str();
  EXPECT_TRUE(fs::exists(dir_ / "from_config" / "mico.csv"));
}

TEST_F(CliTest, HelpAndVersionExitZero) {
  EXPECT_EQ(invoke({"--help"}), kOk);
  EXPECT_NE(out_.str().find("exact"), std::string::npos);
  EXPECT_EQ(invoke({"--version"}), kOk);
  EXPECT_NE(out_.str().find(kVersion), std::string::npos);
}

}  // namespace
}  // namespace scr::cli
