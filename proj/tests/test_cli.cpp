#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "emsrl/cli.hpp"
#include "emsrl/config.hpp"
#include "support/temp_dir.hpp"

namespace emsrl::cli {
namespace {

namespace fs = std::filesystem;
using emsrl::testing::read_text;
using emsrl::testing::TempDir;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome emsrl(std::vector<std::string> args) {
  args.insert(args.begin(), "emsrl");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string first_line(const fs::path& path) {
  const std::string text = read_text(path);
  return text.substr(0, text.find('\n'));
}

std::size_t line_count(const fs::path& path) {
  const std::string text = read_text(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Small enough to run every command in a few seconds.
SchemeConfig small_config(rl::Scheme scheme = rl::Scheme::kWithoutPrediction) {
  SchemeConfig c;
  c.scheme = scheme;
  c.synth.days = 8;
  c.train_fraction = 0.5;
  c.forecast.epochs = 3;
  c.forecast.hidden = 4;
  c.network.gru_hidden = 4;
  c.network.mlp_hidden = {8};
  c.ppo.iterations = 2;
  c.ppo.workers = 1;
  c.eval_interval = 1;
  return c;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { unsetenv(kWorkersEnv); }
  fs::path write_config(const std::string& name, const SchemeConfig& c) {
    const fs::path p = dir_ / name;
    c.save(p);
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  TempDir dir_{"cli"};
};

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(emsrl({"--help"}).code, kOk);
  EXPECT_EQ(emsrl({"--bogus"}).code, kUsageError);
  EXPECT_EQ(emsrl({"evaluate"}).code, kUsageError);  // --checkpoint is required
  EXPECT_EQ(emsrl({"synth", "--config", path("nope.ini")}).code, kUsageError);
}

TEST_F(CliTest, SynthWritesDatasetAndRepeatsExactly) {
  const fs::path cfg = write_config("c.ini", small_config());
  ASSERT_EQ(emsrl({"synth", "--config", cfg.string(), "--out", path("a")}).code, kOk);
  ASSERT_EQ(emsrl({"synth", "--config", cfg.string(), "--out", path("b")}).code, kOk);
  EXPECT_EQ(first_line(dir_ / "a" / "dataset.csv"), data::kCsvHeader);
  EXPECT_EQ(line_count(dir_ / "a" / "dataset.csv"), 1u + 8u * 24u);
  EXPECT_EQ(read_text(dir_ / "a" / "dataset.csv"), read_text(dir_ / "b" / "dataset.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "manifest.json"));

  ASSERT_EQ(emsrl({"synth", "--config", cfg.string(), "--out", path("c"), "--days", "3",
                   "--seed", "9"}).code,
            kOk);
  EXPECT_EQ(line_count(dir_ / "c" / "dataset.csv"), 1u + 3u * 24u);
  EXPECT_NE(read_text(dir_ / "c" / "dataset.csv").substr(0, 200),
            read_text(dir_ / "a" / "dataset.csv").substr(0, 200));
}

TEST_F(CliTest, SynthRejectsSingleDay) {
  const Outcome r = emsrl({"synth", "--out", path("x"), "--days", "1"});
  EXPECT_EQ(r.code, kRunError);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, MissingCsvDatasetIsAnError) {
  SchemeConfig c = small_config();
  c.source = DataSource::kCsv;
  c.csv_path = path("absent.csv");
  const fs::path cfg = write_config("c.ini", c);
  const Outcome r = emsrl({"train-forecaster", "--config", cfg.string(), "--out", path("f")});
  EXPECT_EQ(r.code, kRunError);
  EXPECT_NE(r.err.find("absent.csv"), std::string::npos) << r.err;
}

TEST_F(CliTest, WorkersOverrideMustBePositive) {
  const fs::path cfg = write_config("c.ini", small_config());
  setenv(kWorkersEnv, "0", 1);
  EXPECT_EQ(emsrl({"synth", "--config", cfg.string(), "--out", path("a")}).code, kRunError);
  unsetenv(kWorkersEnv);
}

TEST_F(CliTest, TrainForecasterOutputs) {
  const fs::path cfg = write_config("c.ini", small_config());
  const Outcome r = emsrl({"train-forecaster", "--config", cfg.string(), "--out", path("f")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const fs::path f = dir_ / "f";
  EXPECT_EQ(first_line(f / "forecast_report.csv"), forecast::ForecastReport::kCsvHeader);
  EXPECT_EQ(line_count(f / "forecast_report.csv"), 7u);
  EXPECT_NO_THROW(load_forecaster_checkpoint(f / "forecaster.json"));
  EXPECT_TRUE(fs::exists(f / "forecast_loss.csv"));
  EXPECT_TRUE(fs::exists(f / "forecast_predictions.csv"));
  EXPECT_TRUE(fs::exists(f / "manifest.json"));
}

TEST_F(CliTest, WithPredictionPolicyNeedsForecaster) {
  const fs::path cfg = write_config("c.ini", small_config(rl::Scheme::kWithPrediction));
  const Outcome r = emsrl({"train-policy", "--config", cfg.string(), "--out", path("p")});
  EXPECT_EQ(r.code, kRunError);
  EXPECT_NE(r.err.find("forecaster"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainPolicyThenEvaluate) {
  const fs::path cfg = write_config("c.ini", small_config());
  const Outcome t = emsrl({"train-policy", "--config", cfg.string(), "--out", path("p")});
  ASSERT_EQ(t.code, kOk) << t.err;
  const fs::path p = dir_ / "p";
  EXPECT_EQ(first_line(p / "training_log.csv"), rl::TrainingLogWriter::kHeader);
  EXPECT_EQ(line_count(p / "training_log.csv"), 3u);
  EXPECT_EQ(first_line(p / "eval_log.csv"), "iteration,mean_reward,std_reward");
  EXPECT_EQ(load_policy_checkpoint(p / "policy.json").iterations, 2u);

  const Outcome e = emsrl({"evaluate", "--checkpoint", (p / "policy.json").string(), "--out",
                           path("e"), "--episodes", "2"});
  ASSERT_EQ(e.code, kOk) << e.err;
  const fs::path ev = dir_ / "e";
  EXPECT_EQ(first_line(ev / "evaluation.csv"), "episode,reward");
  EXPECT_EQ(line_count(ev / "evaluation.csv"), 3u);
  EXPECT_EQ(first_line(ev / "trace.csv"), env::TrajectoryLogWriter::kHeader);
  EXPECT_EQ(line_count(ev / "trace.csv"), 1u + 2u * 24u);
  const auto summary = nlohmann::json::parse(read_text(ev / "evaluation_summary.json"));
  EXPECT_EQ(summary.at("episodes").get<int>(), 2);
  EXPECT_TRUE(summary.contains("action_price_correlation"));
  EXPECT_TRUE(fs::exists(ev / "manifest.json"));
}

TEST_F(CliTest, EvaluateErrors) {
  EXPECT_EQ(emsrl({"evaluate", "--checkpoint", path("missing.json"), "--out", path("e")}).code,
            kRunError);

  const fs::path cfg = write_config("c.ini", small_config());
  ASSERT_EQ(emsrl({"train-policy", "--config", cfg.string(), "--out", path("p")}).code, kOk);
  SchemeConfig longer = small_config();
  longer.env.horizon = 12;
  const fs::path other = write_config("h.ini", longer);
  const Outcome r = emsrl({"evaluate", "--checkpoint", path("p/policy.json"), "--config",
                           other.string(), "--out", path("e")});
  EXPECT_EQ(r.code, kRunError);
  EXPECT_NE(r.err.find("horizon"), std::string::npos) << r.err;

  EXPECT_EQ(emsrl({"evaluate", "--checkpoint", path("p/policy.json"), "--out", path("e"),
                   "--first-episode", "99"}).code,
            kRunError);
}

TEST_F(CliTest, CompareRejectsBadInputs) {
  const fs::path a = write_config("a.ini", small_config());
  SchemeConfig other = small_config();
  other.synth.seed = 99;
  const fs::path b = write_config("b.ini", other);
  const std::string out = path("cmp");
  EXPECT_EQ(emsrl({"compare", "--config-a", a.string(), "--config-b", a.string(), "--seeds", "1",
                   "--out", out}).code,
            kRunError);
  const Outcome r = emsrl({"compare", "--config-a", a.string(), "--config-b", b.string(),
                           "--seeds", "1,2", "--out", out});
  EXPECT_EQ(r.code, kRunError);
  EXPECT_NE(r.err.find("different datasets"), std::string::npos) << r.err;
  SchemeConfig longer = small_config();
  longer.ppo.iterations = 3;
  const fs::path c = write_config("c.ini", longer);
  EXPECT_EQ(emsrl({"compare", "--config-a", a.string(), "--config-b", c.string(), "--seeds",
                   "1,2", "--out", out}).code,
            kRunError);
  EXPECT_EQ(emsrl({"compare", "--config-a", a.string(), "--config-b", a.string(), "--seeds",
                   "1,x", "--out", out}).code,
            kRunError);
}

TEST_F(CliTest, CompareIdenticalConfigsTies) {
  const fs::path a = write_config("a.ini", small_config());
  const Outcome r = emsrl({"compare", "--config-a", a.string(), "--config-b", a.string(),
                           "--seeds", "1,2", "--out", path("cmp")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const fs::path d = dir_ / "cmp";
  EXPECT_EQ(first_line(d / "compare.csv"), "seed,final_reward_a,final_reward_b,winner");
  EXPECT_EQ(line_count(d / "compare.csv"), 3u);
  EXPECT_EQ(first_line(d / "compare_curves.csv"), "config,scheme,seed,iteration,mean_reward");
  EXPECT_EQ(line_count(d / "compare_curves.csv"), 1u + 2u * 2u * 2u);
  const auto summary = nlohmann::json::parse(read_text(d / "compare_summary.json"));
  EXPECT_EQ(summary.at("sign_test_p").get<double>(), 1.0);
  EXPECT_EQ(summary.at("ties").get<int>(), 2);
  EXPECT_EQ(summary.at("verdict").get<std::string>(), "no significant difference");
}

TEST_F(CliTest, ManifestRecordsCommandAndConfig) {
  const fs::path cfg = write_config("c.ini", small_config());
  ASSERT_EQ(emsrl({"synth", "--config", cfg.string(), "--out", path("a")}).code, kOk);
  const auto m = nlohmann::json::parse(read_text(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(m.at("command").get<std::string>(), "synth");
  EXPECT_TRUE(m.contains("config_hash"));
}

}  // namespace
}  // namespace emsrl::cli
