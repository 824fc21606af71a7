#include "commands.h"

#include <filesystem>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "idsbd/io.h"
#include "json.hpp"

namespace idsbd::cli {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  int Cli(std::vector<std::string> args) {
    args.insert(args.begin(), {"--run-dir", dir_.string()});
    return cli::Run(args);
  }

  std::string Read(const std::string& name) { return ReadTextFile(dir_ / name); }

  fs::path dir_;
};

TEST_F(CliTest, GenerateIsReproducible) {
  ASSERT_EQ(Cli({"generate", "--benign", "50", "--attack", "20", "-o", "a.jsonl"}), 0);
  ASSERT_EQ(Cli({"generate", "--benign", "50", "--attack", "20", "-o", "b.jsonl"}), 0);
  EXPECT_EQ(Read("a.jsonl"), Read("b.jsonl"));
  ASSERT_EQ(Cli({"generate", "--benign", "50", "--attack", "20", "--seed", "2",
                 "-o", "c.jsonl"}),
            0);
  EXPECT_NE(Read("a.jsonl"), Read("c.jsonl"));
}

TEST_F(CliTest, SidecarRecordsEffectiveOptions) {
  ASSERT_EQ(Cli({"generate", "--benign", "30", "--attack", "10"}), 0);
  const auto meta = nlohmann::json::parse(Read("flows.jsonl.meta.json"));
  EXPECT_EQ(meta["command"], "generate");
  EXPECT_EQ(meta["options"]["benign"], 30);
  EXPECT_EQ(meta["options"]["seed"], 1);  // default, not given
}

TEST_F(CliTest, ValidationFailuresExitWithTwo) {
  EXPECT_EQ(Cli({}), 2);
  EXPECT_EQ(Cli({"no-such-command"}), 2);
  EXPECT_EQ(Cli({"generate", "--jitter-rate", "1.5"}), 2);
  EXPECT_EQ(Cli({"generate", "--benign", "0", "--attack", "0"}), 2);
  EXPECT_EQ(Cli({"prune-mlp", "--scope", "middle"}), 2);
  EXPECT_EQ(Cli({"prune-rf", "--variant", "4"}), 2);
  EXPECT_EQ(Cli({"split", "--validation-scale", "0"}), 2);
  WriteTextFile(dir_ / "bad.jsonl", "{not json}\n");
  EXPECT_EQ(Cli({"featurize", "-i", "bad.jsonl", "-o", "bad.csv"}), 2);
}

TEST_F(CliTest, RuntimeFailuresExitWithOne) {
  ASSERT_EQ(Cli({"generate", "--benign", "40", "--attack", "0", "-o", "b.jsonl"}), 0);
  ASSERT_EQ(Cli({"featurize", "-i", "b.jsonl", "-o", "b.csv"}), 0);
  EXPECT_EQ(Cli({"train-rf", "--train", "b.csv", "--trees", "2"}), 1);
}

TEST_F(CliTest, HelpExitsWithZero) { EXPECT_EQ(Cli({"--help"}), 0); }

TEST_F(CliTest, EndToEndPipeline) {
  auto ok = [&](std::vector<std::string> args) {
    const std::string joined = args.front();
    ASSERT_EQ(Cli(std::move(args)), 0) << joined;
  };
  ok({"generate", "--benign", "900", "--attack", "300"});
  ok({"split"});
  ok({"poison", "--rate", "0.5"});
  ok({"featurize", "-i", "train_poisoned.jsonl", "-o", "train.csv"});
  ok({"featurize", "-i", "validation.jsonl", "-o", "validation.csv"});
  ok({"featurize", "-i", "test.jsonl", "-o", "test.csv"});
  ok({"featurize", "-i", "test.jsonl", "-o", "backdoor.csv", "--backdoor", "attack"});
  ok({"featurize", "-i", "test.jsonl", "-o", "probe.csv", "--backdoor", "paired"});
  ok({"train-rf", "--trees", "10"});
  ok({"eval", "--model", "rf.json", "--backdoor", "backdoor.csv"});
  ok({"prune-rf", "--checkpoint-every", "0.1"});
  ok({"train-mlp", "--layers", "2", "--width", "16", "--epochs", "3", "--batch", "32"});
  ok({"prune-mlp", "--checkpoints", "4"});
  ok({"finetune", "--epochs", "1", "--batch", "32"});
  ok({"fine-prune", "--epochs", "1"});
  ok({"explain", "--model", "rf.json", "--kind", "pdp", "--range", "0:5", "--points", "11"});
  ok({"explain", "--model", "mlp.json", "--kind", "ale", "--range", "0:5", "--points", "9", "-o", "ale.csv"});
  ok({"correlate"});
  ok({"report"});

  for (const char* f : {"rf.json", "rf.norm.json", "rf_pruned.json", "mlp.json",
                        "mlp.norm.json", "mlp_pruned.json", "mlp_finetuned.json",
                        "mlp_fine_pruned.json", "correlation.csv", "report.json",
                        "rf.pdp.fwd_stdev_ttl.csv", "rf_pruned.metrics.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
    EXPECT_TRUE(fs::exists(dir_ / (std::string(f) + ".meta.json"))) << f;
  }

  const auto metrics = nlohmann::json::parse(Read("rf.metrics.json"));
  EXPECT_GE(metrics["accuracy"].get<double>(), 0.8);
  EXPECT_TRUE(metrics["backdoor_accuracy"].is_number());

  // ALE values are centered on the grid.
  const std::string ale = Read("ale.csv");
  double sum = 0.0;
  int points = 0;
  std::size_t pos = ale.find('\n') + 1;
  while (pos < ale.size()) {
    const std::size_t end = ale.find('\n', pos);
    const std::string line = ale.substr(pos, end - pos);
    sum += std::stod(line.substr(line.rfind(',') + 1));
    ++points;
    pos = end + 1;
  }
  EXPECT_GE(points, 2);
  EXPECT_LE(std::abs(sum), 1e-9 * points);

  const auto report = nlohmann::json::parse(Read("report.json"));
  EXPECT_TRUE(report["metrics"].contains("rf"));
  EXPECT_TRUE(report["metrics"].contains("mlp_pruned"));
  EXPECT_TRUE(report["summaries"].contains("fine_prune"));
  EXPECT_TRUE(report["curves"].contains("rf_prune_curve.csv"));
  EXPECT_TRUE(report["curves"].contains("correlation.csv"));
  EXPECT_FALSE(report["curves"].contains("train.csv"));
}

}  // namespace
}  // namespace idsbd::cli
