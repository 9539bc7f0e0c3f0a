#include "emsrl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "emsrl/text.hpp"

namespace emsrl::rl {

namespace {

constexpr std::string_view kGru = "gru";
constexpr std::string_view kMlp = "mlp";
constexpr const char* kLogStd = "log_std";

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("PpoConfig: gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("PpoConfig: gae_lambda must lie in [0, 1]");
  }
  if (!(clip_epsilon > 0.0)) throw std::invalid_argument("PpoConfig: clip_epsilon must be positive");
  if (update_epochs == 0) throw std::invalid_argument("PpoConfig: update_epochs must be >= 1");
  if (!(actor_lr > 0.0 && critic_lr > 0.0)) {
    throw std::invalid_argument("PpoConfig: learning rates must be positive");
  }
  if (workers == 0) throw std::invalid_argument("PpoConfig: workers must be >= 1");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("PpoConfig: max_grad_norm must be positive");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("PpoConfig: reward_scale must be positive");
}

// ---------------------------------------------------------------------------

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      double gamma, double lambda) {
  if (rewards.empty()) throw std::invalid_argument("compute_gae: empty trajectory");
  if (rewards.size() != values.size()) {
    throw std::invalid_argument("compute_gae: " + std::to_string(rewards.size()) +
                                " rewards but " + std::to_string(values.size()) + " values");
  }
  const std::size_t n = rewards.size();
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  double next_value = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double ret = gamma * lambda * next_adv + rewards[i] + gamma * next_value;
    out.returns[i] = ret;
    out.advantages[i] = ret - values[i];
    next_adv = out.advantages[i];
    next_value = values[i];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

Var clipped_surrogate(Graph& g, Var ratio, double advantage, double epsilon) {
  return g.minimum(g.scale(ratio, advantage),
                   g.scale(g.clip(ratio, 1.0 - epsilon, 1.0 + epsilon), advantage));
}

// ---------------------------------------------------------------------------

std::string_view scheme_name(Scheme scheme) {
  return scheme == Scheme::kWithPrediction ? "with-prediction" : "without-prediction";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "with-prediction") return Scheme::kWithPrediction;
  if (name == "without-prediction") return Scheme::kWithoutPrediction;
  throw std::invalid_argument("unknown scheme '" + std::string(name) +
                              "' (expected with-prediction or without-prediction)");
}

std::size_t observation_width(Scheme scheme, std::size_t lookahead) {
  if (scheme == Scheme::kWithoutPrediction) return env::EnvState::kWidth;
  return env::EnvState::kWidth + 2 + 3 * lookahead;
}

std::vector<double> build_observation(const env::EnvState& state,
                                      const forecast::ForecastProvider& forecasts,
                                      std::size_t lookahead) {
  using forecast::Quantity;
  if (forecasts.max_horizon() < required_forecast_horizon(lookahead)) {
    throw std::out_of_range("build_observation: look-ahead " + std::to_string(lookahead) +
                            " needs forecasts up to " +
                            std::to_string(required_forecast_horizon(lookahead)) +
                            " steps but the bundle covers " +
                            std::to_string(forecasts.max_horizon()));
  }
  const auto s = state.to_array();
  std::vector<double> obs(s.begin(), s.end());
  obs.reserve(observation_width(Scheme::kWithPrediction, lookahead));
  obs.push_back(forecasts.forecast(Quantity::kGeneration, 1));
  obs.push_back(forecasts.forecast(Quantity::kDemand, 1));
  for (std::size_t j = 1; j <= lookahead; ++j) {
    obs.push_back(forecasts.forecast(Quantity::kPrice, j));
    obs.push_back(forecasts.forecast(Quantity::kGeneration, j + 1));
    obs.push_back(forecasts.forecast(Quantity::kDemand, j + 1));
  }
  return obs;
}

double ZeroForecasts::forecast(forecast::Quantity, std::size_t steps) const {
  if (steps == 0 || steps > max_horizon_) {
    throw std::out_of_range("ZeroForecasts: horizon " + std::to_string(steps) + " unavailable");
  }
  return 0.0;
}

ObservationBuilder::ObservationBuilder(Scheme scheme, std::size_t lookahead,
                                       const forecast::ForecasterBundle* bundle,
                                       std::size_t warmup)
    : scheme_(scheme), lookahead_(lookahead), warmup_(warmup) {
  if (scheme_ == Scheme::kWithoutPrediction) return;
  if (lookahead_ == 0) throw std::invalid_argument("ObservationBuilder: look-ahead must be >= 1");
  if (bundle == nullptr) {
    throw std::invalid_argument("with-prediction scheme needs a trained forecaster bundle");
  }
  const std::size_t need = required_forecast_horizon(lookahead_);
  for (forecast::Quantity q : forecast::kQuantities) {
    for (std::size_t h = 1; h <= need; ++h) {
      // Price never needs the last horizon.
      if (q == forecast::Quantity::kPrice && h > lookahead_) continue;
      bundle->model(q, h);  // throws with a descriptive message when missing
    }
  }
  tracker_.emplace(*bundle);
}

void ObservationBuilder::reset(const data::TimeSeriesDataset& ds, std::size_t start,
                               const env::EnvState&) {
  if (!tracker_) return;
  if (start < warmup_) {
    throw std::invalid_argument("ObservationBuilder: episode at hour " + std::to_string(start) +
                                " has less than " + std::to_string(warmup_) +
                                " hours of history for forecaster warm-up");
  }
  tracker_->reset();
  // Generation and demand are known up to start - 1, price up to start.
  for (std::size_t i = start - warmup_; i < start; ++i) {
    tracker_->push(forecast::Quantity::kGeneration, ds.generation[i]);
    tracker_->push(forecast::Quantity::kDemand, ds.demand[i]);
    tracker_->push(forecast::Quantity::kPrice, ds.price[i + 1]);
  }
}

void ObservationBuilder::advance(const env::EnvState& state) {
  if (!tracker_) return;
  tracker_->push(forecast::Quantity::kGeneration, state.generation_prev_kw);
  tracker_->push(forecast::Quantity::kDemand, state.demand_prev_kw);
  tracker_->push(forecast::Quantity::kPrice, state.price);
}

std::vector<double> ObservationBuilder::observe(const env::EnvState& state) const {
  if (!tracker_) {
    const auto s = state.to_array();
    return {s.begin(), s.end()};
  }
  return build_observation(state, *tracker_, lookahead_);
}

// ---------------------------------------------------------------------------

RunningNormalizer::RunningNormalizer(std::size_t width)
    : mean_(width, 0.0), m2_(width, 0.0) {}

void RunningNormalizer::restore(double count, std::vector<double> mean,
                                std::vector<double> m2) {
  if (mean.size() != m2.size()) throw std::invalid_argument("RunningNormalizer: width mismatch");
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

void RunningNormalizer::update(std::span<const double> x) {
  if (x.size() != mean_.size()) throw std::invalid_argument("RunningNormalizer: width mismatch");
  count_ += 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta / count_;
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

std::vector<double> RunningNormalizer::normalize(std::span<const double> x) const {
  if (x.size() != mean_.size()) {
    throw std::invalid_argument("RunningNormalizer: observation width " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(mean_.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double var = count_ > 1.0 ? m2_[i] / count_ : 1.0;
    out[i] = std::clamp((x[i] - mean_[i]) / std::sqrt(var + 1e-8), -kClip, kClip);
  }
  return out;
}

// ---------------------------------------------------------------------------

Agent::Agent(Scheme scheme, std::size_t lookahead, NetworkConfig network,
             env::EnvParams env_params, Rng& rng)
    : obs_norm(rl::observation_width(scheme, lookahead)),
      scheme_(scheme),
      lookahead_(scheme == Scheme::kWithPrediction ? lookahead : 0),
      obs_width_(rl::observation_width(scheme, lookahead)),
      network_(std::move(network)),
      env_params_(env_params) {
  env_params_.validate();
  for (nn::ParameterStore* store : {&actor, &critic}) {
    std::size_t head_input = obs_width_;
    if (recurrent()) {
      nn::init_gru(*store, nn::GruSpec{obs_width_, network_.gru_hidden, 1}, rng, kGru,
                   /*with_readout=*/false);
      head_input = network_.gru_hidden;
    }
    const nn::MlpSpec spec = head_spec(head_input);
    nn::init_mlp(*store, spec, rng, kMlp);
  }
  // A small output layer keeps the initial policy centred and unsaturated.
  const std::size_t last = network_.mlp_hidden.size();
  Tensor& w = actor.value(std::string(kMlp) + ".l" + std::to_string(last) + ".w");
  for (double& v : w.values()) v *= 0.01;
  actor.add(kLogStd, Tensor::vector({network_.initial_log_std}));
  actor.set_bounds(kLogStd, nn::kLogStdMin, nn::kLogStdMax);
}

nn::MlpSpec Agent::head_spec(std::size_t input) const {
  nn::MlpSpec spec;
  spec.widths.push_back(input);
  spec.widths.insert(spec.widths.end(), network_.mlp_hidden.begin(), network_.mlp_hidden.end());
  spec.widths.push_back(1);
  return spec;
}

Agent::Episode Agent::begin(Graph& g) const {
  Episode ep;
  const std::size_t head_input = recurrent() ? network_.gru_hidden : obs_width_;
  const nn::MlpSpec spec = head_spec(head_input);
  ep.actor_mlp = nn::bind_mlp(g, actor, spec, kMlp);
  ep.critic_mlp = nn::bind_mlp(g, critic, spec, kMlp);
  ep.log_std = actor.bind(g, kLogStd);
  if (recurrent()) {
    const nn::GruSpec gs{obs_width_, network_.gru_hidden, 1};
    ep.actor_gru = nn::bind_gru(g, actor, gs, kGru, false);
    ep.critic_gru = nn::bind_gru(g, critic, gs, kGru, false);
    ep.actor_hidden = g.constant(Tensor::zeros({network_.gru_hidden}));
    ep.critic_hidden = g.constant(Tensor::zeros({network_.gru_hidden}));
  }
  return ep;
}

Agent::StepVars Agent::step(Graph& g, Episode& ep, std::span<const double> observation,
                            bool normalize) const {
  if (observation.size() != obs_width_) {
    throw std::invalid_argument("Agent: observation width " + std::to_string(observation.size()) +
                                ", expected " + std::to_string(obs_width_));
  }
  std::vector<double> x = normalize ? obs_norm.normalize(observation)
                                    : std::vector<double>(observation.begin(), observation.end());
  const std::size_t n = x.size();
  const Var input = g.constant(Tensor({n}, std::move(x)));
  const std::size_t head_input = recurrent() ? network_.gru_hidden : obs_width_;
  const nn::MlpSpec spec = head_spec(head_input);
  Var actor_features = input;
  Var critic_features = input;
  if (recurrent()) {
    ep.actor_hidden = nn::gru_cell(g, ep.actor_gru, input, ep.actor_hidden);
    ep.critic_hidden = nn::gru_cell(g, ep.critic_gru, input, ep.critic_hidden);
    actor_features = ep.actor_hidden;
    critic_features = ep.critic_hidden;
  }
  StepVars out;
  out.mean = nn::mlp_forward(g, ep.actor_mlp, spec, actor_features);
  out.value = nn::mlp_forward(g, ep.critic_mlp, spec, critic_features);
  out.log_std = ep.log_std;
  return out;
}

std::uint64_t Agent::checksum() const {
  std::uint64_t h = fnv1a(hex64(actor.checksum()));
  h = fnv1a(hex64(critic.checksum()), h);
  h = fnv1a(format_double(obs_norm.count()), h);
  for (double v : obs_norm.mean()) h = fnv1a(format_double(v), h);
  for (double v : obs_norm.m2()) h = fnv1a(format_double(v), h);
  return h;
}

// ---------------------------------------------------------------------------

Trajectory run_episode(const Agent& agent, env::MicrogridEnv& env,
                       ObservationBuilder& observations, const EpisodeRequest& request,
                       Rng& rng) {
  Trajectory traj;
  traj.episode_index = request.episode_index;
  env::EnvState state = request.initial_soc
                            ? env.reset_with_soc(request.episode_index, *request.initial_soc)
                            : env.reset(request.episode_index, request.mode, rng);
  observations.reset(env.dataset(), env.current_index(), state);
  const nn::ActionBounds bounds = agent.action_bounds();

  Graph g;
  Agent::Episode ep = agent.begin(g);
  while (!env.done()) {
    std::vector<double> obs = observations.observe(state);
    if (agent.recurrent()) {
      const auto& h = g.value(ep.actor_hidden).values();
      traj.actor_hidden.emplace_back(h.begin(), h.end());
    }
    const Agent::StepVars sv = agent.step(g, ep, obs);
    nn::PolicyOutput out;
    out.mean = g.value(sv.mean).item();
    out.log_std = g.value(sv.log_std).item();
    out.value = g.value(sv.value).item();
    nn::ActionSample sample;
    if (request.deterministic) {
      sample.action = nn::deterministic_action(out.mean, bounds);
      sample.log_prob = nn::gaussian_log_prob(out, bounds, sample.action);
    } else {
      sample = nn::gaussian_sample(out, bounds, rng);
    }
    const env::StepResult step = env.step(sample.action);
    traj.observations.push_back(std::move(obs));
    traj.actions.push_back(sample.action);
    traj.log_probs.push_back(sample.log_prob);
    traj.values.push_back(out.value);
    traj.rewards.push_back(step.reward);
    traj.records.push_back(step.record);
    traj.total_reward += step.reward;
    state = step.state;
    if (!step.done) observations.advance(state);
  }
  return traj;
}

std::vector<Trajectory> collect_rollouts(const Agent& agent,
                                         const env::MicrogridEnv& env_template,
                                         const forecast::ForecasterBundle* bundle,
                                         std::size_t workers, std::uint64_t seed,
                                         std::size_t iteration) {
  if (workers == 0) throw std::invalid_argument("collect_rollouts: need at least one worker");
  if (env_template.num_episodes() == 0) {
    throw std::invalid_argument("collect_rollouts: dataset holds no complete episode");
  }
  std::vector<Trajectory> results(workers);
  std::vector<std::exception_ptr> errors(workers);

  auto work = [&](std::size_t w) {
    try {
      Rng rng = make_rng(seed, {iteration, w});
      env::MicrogridEnv env = env_template;
      ObservationBuilder observations(agent.scheme(), agent.lookahead(), bundle);
      std::uniform_int_distribution<std::size_t> pick(0, env.num_episodes() - 1);
      EpisodeRequest request;
      request.episode_index = pick(rng);
      results[w] = run_episode(agent, env, observations, request, rng);
      results[w].worker = w;
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (std::size_t w = 0; w < workers; ++w) {
    if (!errors[w]) continue;
    try {
      std::rethrow_exception(errors[w]);
    } catch (const std::exception& e) {
      throw std::runtime_error("rollout worker " + std::to_string(w) + ": " + e.what());
    }
  }
  return results;
}

void attach_advantages(std::vector<Trajectory>& batch, const PpoConfig& config) {
  for (Trajectory& t : batch) {
    std::vector<double> scaled(t.rewards);
    for (double& r : scaled) r *= config.reward_scale;
    GaeResult gae = compute_gae(scaled, t.values, config.gamma, config.gae_lambda);
    t.advantages = std::move(gae.advantages);
    t.returns = std::move(gae.returns);
  }
}

std::vector<double> probability_ratios(const Trajectory& traj, const Agent& agent) {
  Graph g;
  Agent::Episode ep = agent.begin(g);
  const nn::ActionBounds bounds = agent.action_bounds();
  std::vector<double> out;
  out.reserve(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const Agent::StepVars sv = agent.step(g, ep, traj.observations[t]);
    const Var lp = nn::gaussian_log_prob(g, sv.mean, sv.log_std, bounds, traj.actions[t]);
    out.push_back(std::exp(g.value(lp).item() - traj.log_probs[t]));
  }
  return out;
}

UpdateStats ppo_update(const std::vector<Trajectory>& batch, Agent& agent,
                       const PpoConfig& config) {
  config.validate();
  if (batch.empty()) throw std::invalid_argument("ppo_update: empty batch");
  std::size_t steps = 0;
  std::vector<double> all_adv;
  for (const Trajectory& t : batch) {
    if (t.advantages.size() != t.size() || t.returns.size() != t.size()) {
      throw std::invalid_argument("ppo_update: advantages not attached");
    }
    steps += t.size();
    all_adv.insert(all_adv.end(), t.advantages.begin(), t.advantages.end());
  }
  double adv_mean = 0.0;
  double adv_std = 1.0;
  if (config.normalize_advantages) {
    adv_mean = mean_of(all_adv);
    double ss = 0.0;
    for (double a : all_adv) ss += (a - adv_mean) * (a - adv_mean);
    adv_std = std::sqrt(ss / static_cast<double>(all_adv.size())) + 1e-8;
  }
  const double inv_steps = 1.0 / static_cast<double>(steps);
  const nn::ActionBounds bounds = agent.action_bounds();

  UpdateStats stats;
  for (std::size_t pass = 0; pass < config.update_epochs; ++pass) {
    agent.actor.zero_grad();
    agent.critic.zero_grad();
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double ratio_dev = 0.0;
    double ratio_sum = 0.0;
    for (const Trajectory& traj : batch) {
      Graph g;
      Agent::Episode ep = agent.begin(g);
      std::vector<Var> surrogate;
      std::vector<Var> squared;
      surrogate.reserve(traj.size());
      squared.reserve(traj.size());
      for (std::size_t t = 0; t < traj.size(); ++t) {
        const Agent::StepVars sv = agent.step(g, ep, traj.observations[t]);
        const Var lp = nn::gaussian_log_prob(g, sv.mean, sv.log_std, bounds, traj.actions[t]);
        const Var ratio = g.exp(g.add_scalar(lp, -traj.log_probs[t]));
        const double w = g.value(ratio).item();
        ratio_dev += std::abs(w - 1.0);
        ratio_sum += w;
        const double adv = (traj.advantages[t] - adv_mean) / adv_std;
        surrogate.push_back(clipped_surrogate(g, ratio, adv, config.clip_epsilon));
        squared.push_back(g.square(g.add_scalar(sv.value, -traj.returns[t])));
      }
      const Var a_loss = g.scale(g.sum(g.concat(surrogate)), -inv_steps);
      const Var c_loss = g.scale(g.sum(g.concat(squared)), inv_steps);
      const Var total = g.add(a_loss, c_loss);
      const double a = g.value(a_loss).item();
      const double c = g.value(c_loss).item();
      if (!std::isfinite(a) || !std::isfinite(c)) {
        throw std::runtime_error("ppo_update: non-finite loss in pass " + std::to_string(pass) +
                                 " (worker " + std::to_string(traj.worker) + ", episode " +
                                 std::to_string(traj.episode_index) + ", actor " +
                                 format_double(a) + ", critic " + format_double(c) + ")");
      }
      actor_loss += a;
      critic_loss += c;
      g.backward(total);
      agent.actor.accumulate_gradients(g);
      agent.critic.accumulate_gradients(g);
    }
    if (config.clip_gradients) {
      for (nn::ParameterStore* store : {&agent.actor, &agent.critic}) {
        const double norm = store->gradient_norm();
        if (norm > config.max_grad_norm) store->scale_gradients(config.max_grad_norm / norm);
      }
    }
    nn::optimizer_step(agent.actor, config.actor_lr);
    nn::optimizer_step(agent.critic, config.critic_lr);
    stats.actor_loss_per_pass.push_back(actor_loss);
    stats.critic_loss_per_pass.push_back(critic_loss);
    if (pass == 0) stats.first_pass_mean_ratio = ratio_sum * inv_steps;
    stats.actor_loss = actor_loss;
    stats.critic_loss = critic_loss;
    stats.mean_abs_ratio_deviation = ratio_dev * inv_steps;
  }
  return stats;
}

// ---------------------------------------------------------------------------

TrainingLogWriter::TrainingLogWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
  out_ << kHeader << '\n';
}

void TrainingLogWriter::write(const IterationRecord& r) {
  out_ << r.iteration << ',' << format_double(r.mean_reward) << ','
       << format_double(r.min_reward) << ',' << format_double(r.max_reward) << ','
       << format_double(r.actor_loss) << ',' << format_double(r.critic_loss) << ','
       << format_double(r.mean_abs_ratio_deviation) << '\n';
  out_.flush();
}

Trainer::Trainer(Agent& agent, std::shared_ptr<const data::TimeSeriesDataset> train,
                 const forecast::ForecasterBundle* bundle, PpoConfig config,
                 std::uint64_t seed)
    : agent_(&agent),
      env_(std::move(train), agent.env_params()),
      bundle_(bundle),
      config_(config),
      seed_(seed) {
  config_.validate();
  if (env_.num_episodes() == 0) {
    throw std::invalid_argument("Trainer: training data holds no complete episode");
  }
  // Validates bundle coverage up front rather than inside a worker.
  ObservationBuilder probe(agent.scheme(), agent.lookahead(), bundle_);
}

IterationRecord Trainer::iterate() {
  Agent& agent = *agent_;
  if (config_.normalize_observations && iteration_ == 0 && agent.obs_norm.count() == 0.0) {
    // Priming batch so the first update already sees standardized inputs.
    for (const Trajectory& t :
         collect_rollouts(agent, env_, bundle_, config_.workers, seed_,
                          std::numeric_limits<std::uint32_t>::max())) {
      for (const auto& o : t.observations) agent.obs_norm.update(o);
    }
  }
  std::vector<Trajectory> batch =
      collect_rollouts(agent, env_, bundle_, config_.workers, seed_, iteration_);
  attach_advantages(batch, config_);
  const UpdateStats stats = ppo_update(batch, agent, config_);
  if (config_.normalize_observations) {
    for (const Trajectory& t : batch) {
      for (const auto& o : t.observations) agent.obs_norm.update(o);
    }
  }

  IterationRecord rec;
  rec.iteration = iteration_;
  std::vector<double> totals;
  for (const Trajectory& t : batch) totals.push_back(t.total_reward);
  rec.mean_reward = mean_of(totals);
  rec.min_reward = *std::min_element(totals.begin(), totals.end());
  rec.max_reward = *std::max_element(totals.begin(), totals.end());
  rec.actor_loss = stats.actor_loss;
  rec.critic_loss = stats.critic_loss;
  rec.mean_abs_ratio_deviation = stats.mean_abs_ratio_deviation;
  ++iteration_;
  return rec;
}

// ---------------------------------------------------------------------------

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_correlation: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson_correlation: need two points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  // A constant series carries no linear association.
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

EvaluationReport evaluate(const Agent& agent,
                          std::shared_ptr<const data::TimeSeriesDataset> dataset,
                          const forecast::ForecasterBundle* bundle,
                          std::span<const std::size_t> episodes) {
  env::MicrogridEnv env(std::move(dataset), agent.env_params());
  ObservationBuilder observations(agent.scheme(), agent.lookahead(), bundle);
  EvaluationReport report;
  std::vector<double> actions, prices;
  Rng unused = make_rng(0);
  for (std::size_t e : episodes) {
    EpisodeRequest request;
    request.episode_index = e;
    request.mode = env::ResetMode::kEvaluation;
    request.deterministic = true;
    Trajectory t = run_episode(agent, env, observations, request, unused);
    for (const auto& r : t.records) {
      actions.push_back(r.action_executed_kw);
      prices.push_back(r.price);
    }
    report.episodes.push_back(e);
    report.episode_rewards.push_back(t.total_reward);
    report.traces.push_back(std::move(t.records));
  }
  if (report.episodes.empty()) throw std::invalid_argument("evaluate: no episodes requested");
  report.mean_reward = mean_of(report.episode_rewards);
  double ss = 0.0;
  for (double r : report.episode_rewards) ss += (r - report.mean_reward) * (r - report.mean_reward);
  report.std_reward = std::sqrt(ss / static_cast<double>(report.episode_rewards.size()));
  report.action_price_correlation = actions.size() >= 2 ? pearson_correlation(actions, prices) : 0.0;
  return report;
}

}  // namespace emsrl::rl
