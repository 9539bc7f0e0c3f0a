#include "emsrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "emsrl/text.hpp"

namespace emsrl::env {

void EnvParams::validate() const {
  if (!(d_max > 0 && c_max > 0 && capacity_kwh > 0)) {
    throw std::invalid_argument("EnvParams: power limits and capacity must be positive");
  }
  if (!(eta_c > 0 && eta_c <= 1 && eta_d > 0 && eta_d <= 1)) {
    throw std::invalid_argument("EnvParams: efficiencies must lie in (0, 1]");
  }
  if (!(lambda1 >= lambda2 && lambda2 >= 0)) {
    throw std::invalid_argument("EnvParams: need lambda1 >= lambda2 >= 0");
  }
  if (!(initial_soc >= 0 && initial_soc <= 1)) {
    throw std::invalid_argument("EnvParams: initial SOC must lie in [0, 1]");
  }
  if (!(train_soc_low >= 0 && train_soc_low <= train_soc_high &&
        train_soc_high <= 1)) {
    throw std::invalid_argument("EnvParams: bad training SOC range");
  }
  if (horizon == 0) throw std::invalid_argument("EnvParams: horizon must be positive");
}

double soc_transition(double soc, double action_kw, const EnvParams& p) {
  const double next = action_kw >= 0.0
                          ? soc + p.eta_c / p.capacity_kwh * action_kw
                          : soc + action_kw / (p.capacity_kwh * p.eta_d);
  return std::clamp(next, 0.0, 1.0);
}

double degradation_cost(double soc, double action_kw, const EnvParams& p) {
  return (soc < 0.5 ? p.lambda1 : p.lambda2) * std::abs(action_kw);
}

double grid_purchase(double demand_kw, double generation_kw, double action_kw) {
  return std::max(0.0, demand_kw - generation_kw + action_kw);
}

double reward(double price, double grid_kw, double soc, double action_kw,
              const EnvParams& p) {
  return -price * grid_kw - degradation_cost(soc, action_kw, p);
}

std::pair<double, double> feasible_action_range(double soc,
                                                const EnvParams& p) {
  const double max_charge = (1.0 - soc) * p.capacity_kwh / p.eta_c;
  const double max_discharge = soc * p.capacity_kwh * p.eta_d;
  return {-std::min(p.d_max, max_discharge), std::min(p.c_max, max_charge)};
}

// ---------------------------------------------------------------------------

MicrogridEnv::MicrogridEnv(std::shared_ptr<const data::TimeSeriesDataset> dataset,
                           EnvParams params)
    : dataset_(std::move(dataset)), params_(params) {
  if (!dataset_) throw std::invalid_argument("MicrogridEnv: null dataset");
  params_.validate();
  for (std::size_t s = kLeadHours; s + params_.horizon < dataset_->size(); ++s) {
    if (dataset_->hour_of_day(s) == 0) starts_.push_back(s);
  }
}

std::size_t MicrogridEnv::episode_start(std::size_t episode_index) const {
  if (episode_index >= starts_.size()) {
    throw std::out_of_range("MicrogridEnv: episode " +
                            std::to_string(episode_index) + " requested but dataset holds " +
                            std::to_string(starts_.size()) + " episodes");
  }
  return starts_[episode_index];
}

EnvState MicrogridEnv::reset(std::size_t episode_index, ResetMode mode,
                             Rng& rng) {
  double soc = params_.initial_soc;
  if (mode == ResetMode::kTraining) {
    std::uniform_real_distribution<double> dist(params_.train_soc_low,
                                                 params_.train_soc_high);
    soc = dist(rng);
  }
  return reset_with_soc(episode_index, soc);
}

EnvState MicrogridEnv::reset_with_soc(std::size_t episode_index, double soc) {
  if (!(soc >= 0.0 && soc <= 1.0)) {
    throw std::invalid_argument("MicrogridEnv: initial SOC outside [0, 1]");
  }
  start_ = episode_start(episode_index);
  t_ = 0;
  started_ = true;
  const auto& ds = *dataset_;
  state_ = EnvState{soc, ds.generation[start_ - 1], ds.demand[start_ - 1],
                    ds.price[start_]};
  return state_;
}

StepResult MicrogridEnv::step(double action_kw) {
  if (!started_) throw std::logic_error("MicrogridEnv: step before reset");
  if (done()) throw std::logic_error("MicrogridEnv: step after episode end");
  if (!std::isfinite(action_kw)) {
    throw std::invalid_argument("MicrogridEnv: non-finite action");
  }
  const auto& ds = *dataset_;
  const std::size_t i = start_ + t_;
  const double soc = state_.soc;

  const auto [lo, hi] = feasible_action_range(soc, params_);
  const double executed = std::clamp(action_kw, lo, hi);
  const double demand = ds.demand[i];
  const double generation = ds.generation[i];
  const double price = state_.price;
  const double grid = grid_purchase(demand, generation, executed);
  const double r = reward(price, grid, soc, executed, params_);

  double next_soc = soc_transition(soc, executed, params_);
  // Land exactly on the bound when the SOC limit (not the power limit) binds.
  if (executed == hi && hi < params_.c_max) next_soc = 1.0;
  if (executed == lo && lo > -params_.d_max) next_soc = 0.0;

  StepResult out;
  out.record = StepRecord{t_,     soc,      state_.generation_prev_kw,
                          state_.demand_prev_kw, price, action_kw, executed,
                          grid,   r};
  ++t_;
  state_ = EnvState{next_soc, generation, demand, ds.price[start_ + t_]};
  out.state = state_;
  out.reward = r;
  out.done = t_ == params_.horizon;
  return out;
}

// ---------------------------------------------------------------------------

TrajectoryLogWriter::TrajectoryLogWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
  out_ << kHeader << '\n';
}

void TrajectoryLogWriter::write(std::size_t episode, const StepRecord& r) {
  out_ << episode << ',' << r.t << ',' << format_double(r.soc) << ','
       << format_double(r.generation_prev_kw) << ',' << format_double(r.demand_prev_kw) << ','
       << format_double(r.price) << ',' << format_double(r.action_requested_kw) << ','
       << format_double(r.action_executed_kw) << ',' << format_double(r.grid_kw) << ','
       << format_double(r.reward) << '\n';
}

}  // namespace emsrl::env
