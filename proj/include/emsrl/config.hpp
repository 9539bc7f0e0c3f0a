#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "emsrl/data.hpp"
#include "emsrl/env.hpp"
#include "emsrl/forecast.hpp"
#include "emsrl/rl.hpp"

namespace emsrl {

enum class DataSource { kSynth, kCsv };

// Everything a run needs, serialized as an INI file with the sections
// [run] [scheme] [env] [ppo] [network] [forecast] [data] [synth].
struct SchemeConfig {
  rl::Scheme scheme = rl::Scheme::kWithoutPrediction;
  // Look-ahead hours in the with-prediction observation.
  std::size_t lookahead = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  // Every this many iterations the policy is scored on held-out episodes.
  std::size_t eval_interval = 10;

  env::EnvParams env;
  rl::PpoConfig ppo;
  rl::NetworkConfig network;
  forecast::ForecastOptions forecast;
  // Trained bundle for the with-prediction scheme; empty means "train one".
  std::string forecaster_checkpoint;

  DataSource source = DataSource::kSynth;
  std::string csv_path;
  double train_fraction = 0.8;
  data::SynthConfig synth;

  void validate() const;
  std::string to_ini() const;
  static SchemeConfig from_ini(const std::string& text);
  static SchemeConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // FNV-1a of the canonical INI text.
  std::uint64_t hash() const;
  // Identifies the dataset the config resolves to (source and generator).
  std::uint64_t data_hash() const;
};

struct LoadedData {
  std::shared_ptr<const data::TimeSeriesDataset> full;
  std::shared_ptr<const data::TimeSeriesDataset> train;
  std::shared_ptr<const data::TimeSeriesDataset> test;
  std::string report;  // ingestion summary
};

// Loads or generates the dataset and splits it. Both parts must hold at least
// one episode plus the forecaster warm-up.
LoadedData load_data(const SchemeConfig& config);

// ---------------------------------------------------------------------------
// JSON checkpoints. Doubles are written in shortest round-trip form so a
// reload reproduces every bit.

inline constexpr int kCheckpointFormat = 1;

void save_forecaster_checkpoint(const forecast::ForecasterBundle& bundle,
                                const SchemeConfig& config,
                                const std::filesystem::path& path);
forecast::ForecasterBundle load_forecaster_checkpoint(
    const std::filesystem::path& path);

void save_policy_checkpoint(const rl::Agent& agent, const SchemeConfig& config,
                            std::size_t iterations,
                            const std::filesystem::path& path);

struct PolicyCheckpoint {
  SchemeConfig config;
  std::size_t iterations = 0;
  std::unique_ptr<rl::Agent> agent;
};
PolicyCheckpoint load_policy_checkpoint(const std::filesystem::path& path);

}  // namespace emsrl
