// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "tfi/experiment.hpp"
#include "tfi/plots.hpp"
#include "tfi/sweep.hpp"

namespace tfi {
namespace {

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = std::filesystem::temp_directory_path() / "tfi_experiment_test" / info->name();
    std::filesystem::remove_all(root_);
    std::filesystem::create_directories(root_);
    setenv(kOutputRootEnv, root_.c_str(), 1);
  }
  void TearDown() override { unsetenv(kOutputRootEnv); }

  static ExperimentConfig Tiny() {
    ExperimentConfig c;
    c.name = "tiny";
    c.dataset.train_size = 64;
    c.dataset.test_size = 32;
    c.dataset.probe_size = 8;
    c.dataset.image_size = 8;
    c.architecture = "plain_cnn";
    c.width = 2;
    c.n_clients = 4;
    c.training.rounds = 2;
    c.training.batch_size = 16;
    c.training.participation_fraction = 1.0;
    c.attack.method = "tfi";
    c.attack.malicious_fraction = 0.25;
    c.attack.probe_count = 4;
    c.evaluation.scc_samples = 1;
    c.output_dir = "out";
    return c;
  }

  static std::string Text(const std::filesystem::path& p) { return ReadTextFile(p); }

  std::filesystem::path root_;
};

TEST_F(ExperimentTest, WritesRunArtifacts) {
  const ExperimentConfig cfg = Tiny();
  const ExperimentOutcome out = RunExperiment(cfg);
  ASSERT_EQ(out.runs.size(), 1u);
  const auto dir = root_ / "out";
  EXPECT_EQ(ConfigFromJson(ReadJsonFile(dir / "config.json")), cfg);
  const Json manifest = ReadJsonFile(dir / "manifest.json");
  EXPECT_EQ(manifest.at("kind"), "run");
  EXPECT_EQ(manifest.at("config_hash"), ConfigHash(cfg));
  const auto seed_dir = dir / ("seed-" + std::to_string(cfg.master_seed));
  for (const char* f : {"metrics.csv", "rounds.jsonl", "summary.json", "final_params.json", "final_params.bin"}) {
    EXPECT_TRUE(std::filesystem::exists(seed_dir / f)) << f;
  }
  const auto rows = ReadCsv(seed_dir / "metrics.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].size(), 6u);
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[3][0], "2");
  std::istringstream jsonl(Text(seed_dir / "rounds.jsonl"));
  std::string line;
  int records = 0;
  while (std::getline(jsonl, line)) {
    EXPECT_EQ(Json::parse(line).at("round"), ++records);
  }
  EXPECT_EQ(records, 2);
  const Network final_net = LoadParams(seed_dir / "final_params");
  EXPECT_EQ(final_net.params().size(), BuildArchitecture("plain_cnn", {3, 8, 8}, 8, 2)->param_count());
}

TEST_F(ExperimentTest, ZeroRoundsEvaluatesOnlyTheInitialModel) {
  ExperimentConfig cfg = Tiny();
  cfg.training.rounds = 0;
  const ExperimentOutcome out = RunExperiment(cfg);
  ASSERT_EQ(out.runs[0].metrics.size(), 1u);
  EXPECT_EQ(out.runs[0].metrics[0].round, 0);
  EXPECT_TRUE(out.runs[0].metrics[0].mta.has_value());
}

TEST_F(ExperimentTest, AttackWithoutAttackersMatchesCleanTraining) {
  ExperimentConfig clean = Tiny(), idle = Tiny();
  clean.attack.method = "none";
  clean.output_dir = "clean";
  idle.attack.malicious_fraction = 0.0;
  idle.output_dir = "idle";
  const ExperimentOutcome a = RunExperiment(clean), b = RunExperiment(idle);
  ASSERT_EQ(a.runs[0].metrics.size(), b.runs[0].metrics.size());
  for (std::size_t k = 0; k < a.runs[0].metrics.size(); ++k) {
    EXPECT_EQ(a.runs[0].metrics[k].mta, b.runs[0].metrics[k].mta);
  }
  const std::string seed = "seed-" + std::to_string(clean.master_seed);
  EXPECT_EQ(Text(root_ / "clean" / seed / "final_params.bin"), Text(root_ / "idle" / seed / "final_params.bin"));
}

TEST_F(ExperimentTest, RepeatsUseDistinctSeedsWithOneSchema) {
  ExperimentConfig cfg = Tiny();
  cfg.repeats = 3;
  const ExperimentOutcome out = RunExperiment(cfg);
  ASSERT_EQ(out.runs.size(), 3u);
  std::set<std::string> bodies;
  for (int r = 0; r < 3; ++r) {
    const auto path = root_ / "out" / ("seed-" + std::to_string(RepeatSeed(cfg, r))) / "metrics.csv";
    const auto rows = ReadCsv(path);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], ReadCsv(root_ / "out" / ("seed-" + std::to_string(cfg.master_seed)) / "metrics.csv")[0]);
    bodies.insert(Text(root_ / "out" / ("seed-" + std::to_string(RepeatSeed(cfg, r))) / "final_params.bin"));
  }
  EXPECT_EQ(bodies.size(), 3u);
  EXPECT_EQ(ReadJsonFile(root_ / "out" / "manifest.json").at("seeds").size(), 3u);
}

TEST_F(ExperimentTest, RerunIsByteIdentical) {
  ExperimentConfig a = Tiny(), b = Tiny();
  b.output_dir = "again";
  b.threads = 2;
  RunExperiment(a);
  RunExperiment(b);
  const std::string seed = "seed-" + std::to_string(a.master_seed);
  EXPECT_EQ(Text(root_ / "out" / seed / "metrics.csv"), Text(root_ / "again" / seed / "metrics.csv"));
  EXPECT_EQ(Text(root_ / "out" / seed / "final_params.bin"), Text(root_ / "again" / seed / "final_params.bin"));
}

TEST_F(ExperimentTest, SingleValueSweepMatchesRun) {
  ExperimentConfig cfg = Tiny();
  const SweepOutcome sweep = Sweep(cfg, "architecture", {"plain_cnn"});
  cfg.output_dir = "direct";
  RunExperiment(cfg);
  const std::string seed = "seed-" + std::to_string(cfg.master_seed);
  EXPECT_EQ(Text(root_ / "out" / "architecture-plain_cnn" / seed / "metrics.csv"),
            Text(root_ / "direct" / seed / "metrics.csv"));
  ASSERT_EQ(sweep.rows.size(), 1u);
  EXPECT_EQ(sweep.manifest.at("kind"), "sweep");
  EXPECT_EQ(ReadCsv(root_ / "out" / "sweep.csv")[0].size(), 8u);
}

TEST_F(ExperimentTest, DpSweepReportsRetentionAgainstNoiseFreeRun) {
  ExperimentConfig cfg = Tiny();
  cfg.aggregation.clip_norm = 5.0;
  cfg.attack.eps0 = 4.0;
  const SweepOutcome sweep = Sweep(cfg, "dp_sigma", {"0", "0.05", "0.1", "0.2"});
  ASSERT_EQ(sweep.rows.size(), 4u);
  const SweepRow& ref = sweep.rows[0];
  ASSERT_GT(ref.asr, 0.0);
  for (const SweepRow& r : sweep.rows) {
    ASSERT_TRUE(r.retention.has_value());
    EXPECT_DOUBLE_EQ(*r.retention, r.asr / ref.asr);
  }
  EXPECT_EQ(*ref.retention, 1.0);
  const auto csv = ReadCsv(root_ / "out" / "sweep.csv");
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_FALSE(csv[4][7].empty());
  EXPECT_EQ(ReadJsonFile(root_ / "out" / "dp_sigma-0.2" / "config.json").at("aggregation").at("kind"), "dp");
  EXPECT_THROW(Sweep(cfg, "dp_sigma", {"-1"}), ConfigError);
  EXPECT_THROW(Sweep(cfg, "lr", {"0.1"}), ConfigError);
}

TEST_F(ExperimentTest, ArchitectureSweepFeedsScatterAndCorrelation) {
  ExperimentConfig cfg = Tiny();
  cfg.repeats = 2;
  const SweepOutcome sweep = Sweep(cfg, "architecture", {"plain_cnn", "residual_cnn", "dense_cnn"});
  EXPECT_EQ(sweep.rows.size(), 6u);
  EXPECT_EQ(sweep.pearson_per_seed.size(), 2u);
  for (const SweepRow& r : sweep.rows) EXPECT_TRUE(r.scc.has_value());
  const PlotOutputs plots = EmitPlots(root_ / "out" / "manifest.json", root_ / "plots");
  EXPECT_EQ(plots.scatter_points, 3u);
  EXPECT_TRUE(std::filesystem::exists(root_ / "plots" / "scc_asr.svg"));
  EXPECT_TRUE(std::filesystem::exists(root_ / "plots" / "asr_mta.svg"));
  EXPECT_EQ(Text(root_ / "plots" / "scc_asr.svg").substr(0, 4), "<svg");
}

TEST_F(ExperimentTest, PlotsLongCsvAndIntensitySeries) {
  ExperimentConfig cfg = Tiny();
  cfg.attack.i_max = 1.0;
  cfg.attack.lambda = 0.1;
  RunExperiment(cfg);
  const PlotOutputs plots = EmitPlots(root_ / "out" / "manifest.json", root_ / "plots");
  const auto rows = ReadCsv(plots.long_csv);
  ASSERT_EQ(rows.size(), plots.long_rows + 1);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"source", "seed", "round", "metric", "value"}));
  bool found = false;
  for (const auto& row : rows) {
    if (row[0] == "schedule" && row[2] == "10") {
      EXPECT_NEAR(std::stod(row[4]), 1.0 - std::exp(-1.0), 1e-12);
      EXPECT_NEAR(std::stod(row[4]), 0.632, 5e-4);
      found = true;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_TRUE(std::filesystem::exists(root_ / "plots" / "intensity.svg"));
}

TEST_F(ExperimentTest, PlotsOnEmptyRunsWriteHeaderOnly) {
  const auto dir = root_ / "empty";
  WriteTextFile(dir / "seed-1" / "metrics.csv", std::string(kMetricsHeader) + "\n");
  WriteJsonFile(dir / "seed-1" / "summary.json", Json::object());
  WriteJsonFile(dir / "manifest.json", Json{{"format", "tfi-manifest"},
                                            {"kind", "run"},
                                            {"config", ToJson(Tiny())},
                                            {"runs", Json::array({{{"seed", 1}, {"dir", "seed-1"}}})}});
  const PlotOutputs plots = EmitPlots(dir / "manifest.json", root_ / "plots");
  EXPECT_EQ(plots.long_rows, 0u);
  EXPECT_TRUE(plots.svgs.empty());
  EXPECT_EQ(Text(plots.long_csv), std::string(kLongHeader) + "\n");
  WriteJsonFile(dir / "other.json", Json{{"format", "something"}});
  EXPECT_THROW(EmitPlots(dir / "other.json", root_ / "plots"), ConfigError);
}

TEST_F(ExperimentTest, ProbeAndTriggerExports) {
  const ExperimentConfig cfg = Tiny();
  const std::vector<ClientProbe> probes = ProbeExperiment(cfg);
  EXPECT_EQ(probes.size(), cfg.n_clients);
  const auto rows = ReadCsv(root_ / "out" / ("seed-" + std::to_string(cfg.master_seed)) / "probe.csv");
  EXPECT_EQ(rows.size(), cfg.n_clients + 1);
  const Json report = ExportTrigger(cfg);
  EXPECT_TRUE(std::filesystem::exists(root_ / "out" / "trigger" / "spectrum.json"));
  EXPECT_FALSE(report.empty());
}

int RunCli(const std::string& args) {
  const int status = std::system((std::string(TFISIM_BINARY) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(ExperimentTest, CliExitCodes) {
  ExperimentConfig cfg = Tiny();
  cfg.training.rounds = 1;
  WriteJsonFile(root_ / "good.json", ToJson(cfg));
  EXPECT_EQ(RunCli("run " + (root_ / "good.json").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(root_ / "out" / "manifest.json"));
  EXPECT_EQ(RunCli("plots " + (root_ / "out" / "manifest.json").string() + " --out " + (root_ / "p").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(root_ / "p" / "long.csv"));
  EXPECT_EQ(RunCli("preset desk --out " + (root_ / "desk.json").string()), 0);
  EXPECT_EQ(LoadConfig(root_ / "desk.json"), DeskPreset());

  Json bad = ToJson(cfg);
  bad["training"]["lr"] = "fast";
  WriteJsonFile(root_ / "bad.json", bad);
  EXPECT_EQ(RunCli("run " + (root_ / "bad.json").string()), 2);
  EXPECT_EQ(RunCli("run " + (root_ / "missing.json").string()), 2);
  EXPECT_EQ(RunCli("frobnicate"), 2);
  EXPECT_EQ(RunCli("sweep " + (root_ / "good.json").string() + " --axis lr --values 1"), 2);

  WriteJsonFile(root_ / "broken_manifest.json", Json{{"format", "tfi-manifest"}, {"kind", "run"}});
  EXPECT_EQ(RunCli("plots " + (root_ / "broken_manifest.json").string()), 3);
}

}  // namespace
}  // namespace tfi
