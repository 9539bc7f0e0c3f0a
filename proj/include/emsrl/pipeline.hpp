#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emsrl/config.hpp"
#include "emsrl/forecast.hpp"
#include "emsrl/rl.hpp"

namespace emsrl {

// Fresh networks for a config; initialization draws from the run seed.
std::unique_ptr<rl::Agent> make_agent(const SchemeConfig& config);

forecast::BundleTraining train_forecasters(const SchemeConfig& config,
                                           const LoadedData& data);

struct EvalPoint {
  std::size_t iteration = 0;  // iterations completed when evaluated
  double mean_reward = 0.0;
  double std_reward = 0.0;
};

struct TrainingOutcome {
  std::unique_ptr<rl::Agent> agent;  // last good parameters
  std::vector<rl::IterationRecord> log;
  std::vector<EvalPoint> evaluations;
  bool diverged = false;
  std::string error;
};

struct TrainingHooks {
  // Called after every completed iteration.
  std::function<void(const rl::IterationRecord&, const rl::Agent&)> on_iteration;
  // Called after every periodic evaluation; returning false stops training.
  std::function<bool(const EvalPoint&, const rl::Agent&)> on_evaluation;
};

// Runs config.ppo.iterations PPO iterations on the training split, scoring
// the deterministic policy on held-out episodes every eval_interval
// iterations. A non-finite loss stops training and keeps the parameters of
// the last good iteration.
TrainingOutcome train_policy(const SchemeConfig& config, const LoadedData& data,
                             const forecast::ForecasterBundle* bundle,
                             const TrainingHooks& hooks = {});

// Every complete episode of a dataset, in order.
std::vector<std::size_t> all_episodes(const data::TimeSeriesDataset& dataset,
                                      const env::EnvParams& params);

// Mean of the per-iteration mean episode rewards over the last `window`
// iterations (fewer if the log is shorter).
double final_mean_reward(std::span<const rl::IterationRecord> log,
                         std::size_t window = 10);

// Two-sided exact binomial sign test on wins versus losses (ties dropped).
double sign_test_p_value(std::size_t wins, std::size_t losses);

}  // namespace emsrl
