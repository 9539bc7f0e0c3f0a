#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <utility>
#include <vector>

#include "emsrl/data.hpp"
#include "emsrl/nn.hpp"
#include "emsrl/random.hpp"

namespace emsrl::env {

struct EnvParams {
  double d_max = 400.0;         // kW
  double c_max = 400.0;         // kW
  double capacity_kwh = 2000.0;
  double eta_c = 0.95;
  double eta_d = 0.95;
  double lambda1 = 0.013;       // degradation cost per kWh below half charge
  double lambda2 = 0.005;       // degradation cost per kWh otherwise
  std::size_t horizon = 24;     // hours per episode
  double initial_soc = 0.5;     // evaluation episodes
  double train_soc_low = 0.2;   // training episodes draw uniformly
  double train_soc_high = 0.8;

  void validate() const;
  nn::ActionBounds action_bounds() const { return {-d_max, c_max}; }
};

// What the controller sees at the start of hour t.
struct EnvState {
  double soc = 0.0;
  double generation_prev_kw = 0.0;
  double demand_prev_kw = 0.0;
  double price = 0.0;

  static constexpr std::size_t kWidth = 4;
  std::array<double, kWidth> to_array() const {
    return {soc, generation_prev_kw, demand_prev_kw, price};
  }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

double soc_transition(double soc, double action_kw, const EnvParams& params);
double degradation_cost(double soc, double action_kw, const EnvParams& params);
// Energy bought in one hour; surplus renewable output is dropped.
double grid_purchase(double demand_kw, double generation_kw, double action_kw);
double reward(double price, double grid_kw, double soc, double action_kw,
              const EnvParams& params);

// Largest discharge (negative) and charge (positive) that keep SOC in [0, 1]
// and respect the power limits.
std::pair<double, double> feasible_action_range(double soc,
                                                const EnvParams& params);

enum class ResetMode { kTraining, kEvaluation };

struct StepRecord {
  std::size_t t = 0;
  double soc = 0.0;
  double generation_prev_kw = 0.0;
  double demand_prev_kw = 0.0;
  double price = 0.0;
  double action_requested_kw = 0.0;
  double action_executed_kw = 0.0;
  double grid_kw = 0.0;
  double reward = 0.0;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
  StepRecord record;
};

class MicrogridEnv {
 public:
  // Episodes start at midnight with at least one day of history before them.
  static constexpr std::size_t kLeadHours = 24;

  MicrogridEnv(std::shared_ptr<const data::TimeSeriesDataset> dataset,
               EnvParams params);

  const EnvParams& params() const { return params_; }
  const data::TimeSeriesDataset& dataset() const { return *dataset_; }
  std::size_t num_episodes() const { return starts_.size(); }
  std::size_t episode_start(std::size_t episode_index) const;

  EnvState reset(std::size_t episode_index, ResetMode mode, Rng& rng);
  EnvState reset_with_soc(std::size_t episode_index, double soc);
  StepResult step(double action_kw);

  const EnvState& state() const { return state_; }
  std::size_t time() const { return t_; }
  bool done() const { return started_ && t_ >= params_.horizon; }
  std::size_t current_index() const { return start_ + t_; }

 private:
  std::shared_ptr<const data::TimeSeriesDataset> dataset_;
  EnvParams params_;
  std::vector<std::size_t> starts_;
  std::size_t start_ = 0;
  std::size_t t_ = 0;
  bool started_ = false;
  EnvState state_;
};

// Delimited per-step log: one row per environment step.
class TrajectoryLogWriter {
 public:
  static constexpr const char* kHeader =
      "episode,t,soc,generation_prev_kw,demand_prev_kw,price,"
      "action_requested_kw,action_executed_kw,grid_kw,reward";

  explicit TrajectoryLogWriter(const std::filesystem::path& path);
  void write(std::size_t episode, const StepRecord& record);

 private:
  std::ofstream out_;
};

}  // namespace emsrl::env
