#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emsrl/autodiff.hpp"
#include "emsrl/env.hpp"
#include "emsrl/forecast.hpp"
#include "emsrl/nn.hpp"
#include "emsrl/random.hpp"

namespace emsrl::rl {

using ad::Graph;
using ad::Tensor;
using ad::Var;

struct PpoConfig {
  double gamma = 0.95;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  std::size_t update_epochs = 3;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  std::size_t workers = 10;
  std::size_t iterations = 300;
  // Stabilizers, each can be switched off for a literal run.
  bool normalize_advantages = true;
  bool clip_gradients = true;
  double max_grad_norm = 0.5;
  bool normalize_observations = true;
  // Multiplies rewards before advantage/return estimation; logged episode
  // rewards stay unscaled.
  double reward_scale = 0.01;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Advantage estimation and the clipped objective.

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Backward recursion with a zero bootstrap after the last step:
//   R_t = gamma * lambda * A_{t+1} + r_t + gamma * v_{t+1},  A_t = R_t - v_t.
GaeResult compute_gae(std::span<const double> rewards,
                      std::span<const double> values, double gamma,
                      double lambda);

// min(w * adv, clip(w, 1 - eps, 1 + eps) * adv).
double clipped_surrogate(double ratio, double advantage, double epsilon);
Var clipped_surrogate(Graph& graph, Var ratio, double advantage, double epsilon);

// ---------------------------------------------------------------------------
// Observations.

enum class Scheme { kWithPrediction, kWithoutPrediction };

std::string_view scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);

// Width of the observation vector: 4 state entries, plus for the
// with-prediction scheme the current-hour generation/demand estimates and a
// (price, generation, demand) triple per look-ahead hour.
std::size_t observation_width(Scheme scheme, std::size_t lookahead);

// Horizon the forecaster bundle must cover for a given look-ahead.
inline std::size_t required_forecast_horizon(std::size_t lookahead) {
  return lookahead + 1;
}

// s_t followed by [g_t, d_t, p_{t+1}, g_{t+1}, d_{t+1}, ..., p_{t+k}, g_{t+k},
// d_{t+k}] forecasts. Generation and demand come from models fed up to hour
// t-1, price from models fed up to hour t.
std::vector<double> build_observation(const env::EnvState& state,
                                      const forecast::ForecastProvider& forecasts,
                                      std::size_t lookahead);

// Forecast provider that always answers zero.
class ZeroForecasts : public forecast::ForecastProvider {
 public:
  explicit ZeroForecasts(std::size_t max_horizon) : max_horizon_(max_horizon) {}
  std::size_t max_horizon() const override { return max_horizon_; }
  double forecast(forecast::Quantity q, std::size_t steps) const override;

 private:
  std::size_t max_horizon_;
};

// Per-worker observation pipeline. Without prediction it passes the state
// through; with prediction it keeps the forecaster streams in sync with the
// episode.
class ObservationBuilder {
 public:
  ObservationBuilder(Scheme scheme, std::size_t lookahead,
                     const forecast::ForecasterBundle* bundle,
                     std::size_t warmup = 24);

  std::size_t width() const { return observation_width(scheme_, lookahead_); }
  // Threads `warmup` hours of history ending at the reset state.
  void reset(const data::TimeSeriesDataset& dataset, std::size_t start_index,
             const env::EnvState& state);
  // Consumes the newly revealed values carried by the next state.
  void advance(const env::EnvState& state);
  std::vector<double> observe(const env::EnvState& state) const;

 private:
  Scheme scheme_;
  std::size_t lookahead_;
  std::size_t warmup_;
  std::optional<forecast::BundleTracker> tracker_;
};

// Streaming per-dimension mean/variance used to standardize observations.
class RunningNormalizer {
 public:
  static constexpr double kClip = 10.0;

  RunningNormalizer() = default;
  explicit RunningNormalizer(std::size_t width);

  std::size_t width() const { return mean_.size(); }
  double count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& m2() const { return m2_; }
  void restore(double count, std::vector<double> mean, std::vector<double> m2);

  void update(std::span<const double> observation);
  std::vector<double> normalize(std::span<const double> observation) const;

 private:
  double count_ = 0.0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

// ---------------------------------------------------------------------------
// Actor and critic.

struct NetworkConfig {
  std::size_t gru_hidden = 32;
  std::vector<std::size_t> mlp_hidden = {64, 64};
  double initial_log_std = -1.0;
};

// Separate actor and critic networks. The feedforward variant is an MLP over
// the observation; the recurrent variant runs a GRU cell over the observation
// and feeds its hidden state to an MLP head.
class Agent {
 public:
  Agent(Scheme scheme, std::size_t lookahead, NetworkConfig network,
        env::EnvParams env_params, Rng& init_rng);

  Scheme scheme() const { return scheme_; }
  bool recurrent() const { return scheme_ == Scheme::kWithoutPrediction; }
  std::size_t lookahead() const { return lookahead_; }
  std::size_t observation_width() const { return obs_width_; }
  const NetworkConfig& network() const { return network_; }
  const env::EnvParams& env_params() const { return env_params_; }
  nn::ActionBounds action_bounds() const { return env_params_.action_bounds(); }

  nn::ParameterStore actor{"actor"};
  nn::ParameterStore critic{"critic"};
  RunningNormalizer obs_norm;

  // Networks bound into one graph, with the recurrent state of an episode.
  struct Episode {
    nn::MlpVars actor_mlp, critic_mlp;
    nn::GruVars actor_gru, critic_gru;
    Var log_std;
    Var actor_hidden, critic_hidden;
  };
  struct StepVars {
    Var mean;
    Var log_std;
    Var value;
  };

  Episode begin(Graph& graph) const;
  StepVars step(Graph& graph, Episode& episode,
                std::span<const double> observation,
                bool normalize = true) const;

  std::uint64_t checksum() const;

 private:
  nn::MlpSpec head_spec(std::size_t input) const;

  Scheme scheme_;
  std::size_t lookahead_;
  std::size_t obs_width_;
  NetworkConfig network_;
  env::EnvParams env_params_;
};

// ---------------------------------------------------------------------------
// Rollouts.

struct Trajectory {
  std::size_t worker = 0;
  std::size_t episode_index = 0;
  std::vector<std::vector<double>> observations;  // raw, before normalization
  std::vector<std::vector<double>> actor_hidden;  // recurrent state entering each step
  std::vector<double> actions;                     // sampled (requested) actions
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<env::StepRecord> records;
  double total_reward = 0.0;  // undiscounted, unscaled

  std::size_t size() const { return rewards.size(); }
};

struct EpisodeRequest {
  std::size_t episode_index = 0;
  env::ResetMode mode = env::ResetMode::kTraining;
  bool deterministic = false;
  std::optional<double> initial_soc;
};

// Runs one episode; `rng` drives the initial SOC draw and action sampling.
Trajectory run_episode(const Agent& agent, env::MicrogridEnv& env,
                       ObservationBuilder& observations,
                       const EpisodeRequest& request, Rng& rng);

// One episode per worker on concurrent threads. Worker w draws its episode
// and actions from make_rng(seed, {iteration, w}); results come back in
// worker order. Errors are rethrown tagged with the worker id.
std::vector<Trajectory> collect_rollouts(
    const Agent& agent, const env::MicrogridEnv& env_template,
    const forecast::ForecasterBundle* bundle, std::size_t workers,
    std::uint64_t seed, std::size_t iteration);

// Fills advantages and returns (on scaled rewards).
void attach_advantages(std::vector<Trajectory>& batch, const PpoConfig& config);

struct UpdateStats {
  double actor_loss = 0.0;   // negated clipped objective, last pass
  double critic_loss = 0.0;  // mean squared error, last pass
  double mean_abs_ratio_deviation = 0.0;  // mean |w - 1| in the last pass
  std::vector<double> critic_loss_per_pass;
  std::vector<double> actor_loss_per_pass;
  double first_pass_mean_ratio = 0.0;
};

// K full-batch passes; the recurrent state is re-threaded from zero for every
// episode in every pass. Throws std::runtime_error on a non-finite loss.
UpdateStats ppo_update(const std::vector<Trajectory>& batch, Agent& agent,
                       const PpoConfig& config);

// Probability ratios exp(log pi(a) - log pi_old(a)) under the current agent.
std::vector<double> probability_ratios(const Trajectory& trajectory,
                                       const Agent& agent);

// ---------------------------------------------------------------------------
// Training driver.

struct IterationRecord {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double min_reward = 0.0;
  double max_reward = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_abs_ratio_deviation = 0.0;
};

class TrainingLogWriter {
 public:
  static constexpr const char* kHeader =
      "iteration,mean_reward,min_reward,max_reward,actor_loss,critic_loss,"
      "mean_abs_ratio_deviation";
  explicit TrainingLogWriter(const std::filesystem::path& path);
  void write(const IterationRecord& record);

 private:
  std::ofstream out_;
};

class Trainer {
 public:
  Trainer(Agent& agent, std::shared_ptr<const data::TimeSeriesDataset> train,
          const forecast::ForecasterBundle* bundle, PpoConfig config,
          std::uint64_t seed);

  // Collects one batch, updates both networks and folds the batch into the
  // observation statistics.
  IterationRecord iterate();
  std::size_t iterations_done() const { return iteration_; }
  const env::MicrogridEnv& env() const { return env_; }

 private:
  Agent* agent_;
  env::MicrogridEnv env_;
  const forecast::ForecasterBundle* bundle_;
  PpoConfig config_;
  std::uint64_t seed_;
  std::size_t iteration_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation.

struct EvaluationReport {
  std::vector<std::size_t> episodes;
  std::vector<double> episode_rewards;
  std::vector<std::vector<env::StepRecord>> traces;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  // Pearson correlation of executed battery power with price over all steps.
  double action_price_correlation = 0.0;
};

// Deterministic policy (squashed mean) with initial SOC fixed by the
// environment's evaluation setting.
EvaluationReport evaluate(const Agent& agent,
                          std::shared_ptr<const data::TimeSeriesDataset> dataset,
                          const forecast::ForecasterBundle* bundle,
                          std::span<const std::size_t> episodes);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace emsrl::rl
