#include "emsrl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emsrl {

std::unique_ptr<rl::Agent> make_agent(const SchemeConfig& config) {
  Rng rng = make_rng(config.seed, {0xa9e47});
  return std::make_unique<rl::Agent>(config.scheme, config.lookahead, config.network,
                                     config.env, rng);
}

forecast::BundleTraining train_forecasters(const SchemeConfig& config,
                                           const LoadedData& data) {
  return forecast::train_bundle(*data.train, rl::required_forecast_horizon(config.lookahead),
                                config.forecast, config.seed);
}

std::vector<std::size_t> all_episodes(const data::TimeSeriesDataset& dataset,
                                      const env::EnvParams& params) {
  auto shared = std::make_shared<const data::TimeSeriesDataset>(dataset);
  const env::MicrogridEnv env(shared, params);
  std::vector<std::size_t> out(env.num_episodes());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

TrainingOutcome train_policy(const SchemeConfig& config, const LoadedData& data,
                             const forecast::ForecasterBundle* bundle,
                             const TrainingHooks& hooks) {
  config.validate();
  if (config.scheme == rl::Scheme::kWithPrediction && bundle == nullptr) {
    throw std::invalid_argument(
        "with-prediction training needs a forecaster checkpoint; run train-forecaster first");
  }
  TrainingOutcome out;
  out.agent = make_agent(config);
  rl::Agent& agent = *out.agent;
  rl::Trainer trainer(agent, data.train, bundle, config.ppo, config.seed);
  const std::vector<std::size_t> eval_episodes = all_episodes(*data.test, config.env);

  for (std::size_t it = 0; it < config.ppo.iterations; ++it) {
    const rl::Agent snapshot = agent;
    try {
      out.log.push_back(trainer.iterate());
    } catch (const std::runtime_error& e) {
      agent = snapshot;
      out.diverged = true;
      out.error = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    if (hooks.on_iteration) hooks.on_iteration(out.log.back(), agent);
    if ((it + 1) % config.eval_interval == 0 && !eval_episodes.empty()) {
      const rl::EvaluationReport rep = rl::evaluate(agent, data.test, bundle, eval_episodes);
      out.evaluations.push_back({it + 1, rep.mean_reward, rep.std_reward});
      if (hooks.on_evaluation && !hooks.on_evaluation(out.evaluations.back(), agent)) break;
    }
  }
  return out;
}

double final_mean_reward(std::span<const rl::IterationRecord> log, std::size_t window) {
  if (log.empty()) throw std::invalid_argument("final_mean_reward: empty training log");
  const std::size_t n = std::min(window, log.size());
  double acc = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) acc += log[i].mean_reward;
  return acc / static_cast<double>(n);
}

double sign_test_p_value(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  const std::size_t k = std::min(wins, losses);
  // P(X <= k) for X ~ Binomial(n, 1/2), accumulated in log space.
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) -
                              std::lgamma(static_cast<double>(i) + 1.0) -
                              std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_choose - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace emsrl
