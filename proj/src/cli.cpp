#include "emsrl/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "emsrl/config.hpp"
#include "emsrl/pipeline.hpp"
#include "emsrl/text.hpp"

#ifndef EMSRL_VERSION
#define EMSRL_VERSION "dev"
#endif

namespace emsrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "INI configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed (overrides run.seed)");
  cmd->add_option("--out", o.out, "output directory (overrides run.output_dir)");
}

std::optional<std::size_t> workers_override() {
  const char* v = std::getenv(kWorkersEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0' || n == 0) {
    throw std::invalid_argument(std::string(kWorkersEnv) + " must be a positive integer, got '" +
                                v + "'");
  }
  return static_cast<std::size_t>(n);
}

SchemeConfig resolve(const CommonOptions& o) {
  SchemeConfig c = o.config_path.empty() ? SchemeConfig{} : SchemeConfig::load(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (auto w = workers_override()) c.ppo.workers = *w;
  c.validate();
  return c;
}

fs::path prepare_out(const SchemeConfig& c) {
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  return dir;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// The only output that differs between otherwise identical runs (wall time).
void write_manifest(const fs::path& dir, const std::string& command, const SchemeConfig& c,
                    const Timer& timer, const json& extra = json::object()) {
  json m;
  m["command"] = command;
  m["version"] = EMSRL_VERSION;
  m["seed"] = c.seed;
  m["config_hash"] = hex64(c.hash());
  m["config"] = c.to_ini();
  m["wall_time_seconds"] = timer.seconds();
  m["outputs"] = extra;
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  f << m.dump(1) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  return f;
}

void print_series_stats(std::ostream& out, const char* name, std::span<const double> v) {
  double lo = v[0], hi = v[0], acc = 0.0;
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    acc += x;
  }
  out << "  " << name << ": mean " << format_double(acc / static_cast<double>(v.size()))
      << ", min " << format_double(lo) << ", max " << format_double(hi) << '\n';
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonOptions& o, std::optional<std::size_t> days, std::ostream& out) {
  Timer timer;
  CommonOptions oo = o;
  oo.seed.reset();
  SchemeConfig c = resolve(oo);
  if (days) c.synth.days = *days;
  if (o.seed) c.synth.seed = *o.seed;
  c.validate();
  const fs::path dir = prepare_out(c);
  const data::TimeSeriesDataset ds = data::synth_generate(c.synth);
  data::write_csv(ds, dir / "dataset.csv");
  out << "wrote " << (dir / "dataset.csv").string() << " (" << ds.size() << " hours, "
      << c.synth.days << " days)\n";
  print_series_stats(out, "generation_kw", ds.generation);
  print_series_stats(out, "demand_kw", ds.demand);
  print_series_stats(out, "price", ds.price);
  write_manifest(dir, "synth", c, timer, {{"dataset", "dataset.csv"}});
  return kOk;
}

int cmd_train_forecaster(const CommonOptions& o, std::ostream& out) {
  Timer timer;
  const SchemeConfig c = resolve(o);
  const fs::path dir = prepare_out(c);
  const LoadedData data = load_data(c);
  out << data.report << "; train " << data.train->size() << " h, test " << data.test->size()
      << " h\n";
  const forecast::BundleTraining trained = forecast::train_bundle(
      *data.train, rl::required_forecast_horizon(c.lookahead), c.forecast, c.seed,
      [&](std::size_t, const forecast::ForecasterModel& m) {
        out << "trained " << forecast::quantity_name(m.quantity) << " horizon " << m.horizon
            << '\n';
      });
  const auto& models = trained.bundle.models();

  auto loss = open_out(dir / "forecast_loss.csv");
  loss << "quantity,horizon,epoch,loss\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t e = 0; e < trained.loss_curves[i].size(); ++e) {
      loss << forecast::quantity_name(models[i].quantity) << ',' << models[i].horizon << ','
           << e << ',' << format_double(trained.loss_curves[i][e]) << '\n';
    }
  }

  auto pred = open_out(dir / "forecast_predictions.csv");
  pred << "quantity,horizon,timestamp,predicted,actual\n";
  for (const auto& m : models) {
    const auto s = forecast::predict_series(m, forecast::series_of(*data.test, m.quantity),
                                            c.forecast.warmup);
    for (std::size_t i = 0; i < s.predicted.size(); ++i) {
      pred << forecast::quantity_name(m.quantity) << ',' << m.horizon << ','
           << data::format_timestamp(data.test->timestamps[s.target_index[i]]) << ','
           << format_double(s.predicted[i]) << ',' << format_double(s.actual[i]) << '\n';
    }
  }

  const forecast::ForecastReport report =
      forecast::evaluate_bundle(trained.bundle, *data.test, c.forecast.warmup);
  report.write_csv(dir / "forecast_report.csv");
  save_forecaster_checkpoint(trained.bundle, c, dir / "forecaster.json");
  out << report.table();
  for (const auto& r : report.rows) {
    if (r.dropped_zero > 0) {
      out << "note: " << r.dropped_zero << " zero actuals excluded from "
          << forecast::quantity_name(r.quantity) << " horizon " << r.horizon << " MAPE\n";
    }
  }
  write_manifest(dir, "train-forecaster", c, timer,
                 {{"checkpoint", "forecaster.json"},
                  {"report", "forecast_report.csv"},
                  {"loss_curves", "forecast_loss.csv"},
                  {"predictions", "forecast_predictions.csv"}});
  return kOk;
}

std::optional<forecast::ForecasterBundle> bundle_for(const SchemeConfig& c,
                                                     const std::string& flag) {
  const std::string path = flag.empty() ? c.forecaster_checkpoint : flag;
  if (c.scheme != rl::Scheme::kWithPrediction) return std::nullopt;
  if (path.empty()) {
    throw std::invalid_argument(
        "with-prediction needs a forecaster checkpoint: run train-forecaster and pass "
        "--forecaster or set scheme.forecaster_checkpoint");
  }
  return load_forecaster_checkpoint(path);
}

int cmd_train_policy(const CommonOptions& o, const std::string& forecaster, std::ostream& out,
                     std::ostream& err) {
  Timer timer;
  SchemeConfig c = resolve(o);
  const auto bundle = bundle_for(c, forecaster);
  if (!forecaster.empty()) c.forecaster_checkpoint = forecaster;
  const fs::path dir = prepare_out(c);
  const LoadedData data = load_data(c);

  rl::TrainingLogWriter log(dir / "training_log.csv");
  auto eval_log = open_out(dir / "eval_log.csv");
  eval_log << "iteration,mean_reward,std_reward\n";
  TrainingHooks hooks;
  hooks.on_iteration = [&](const rl::IterationRecord& r, const rl::Agent&) {
    log.write(r);
    if ((r.iteration + 1) % 10 == 0) {
      out << "iteration " << r.iteration + 1 << ": mean episode reward "
          << format_double(r.mean_reward) << '\n';
    }
  };
  hooks.on_evaluation = [&](const EvalPoint& p, const rl::Agent&) {
    eval_log << p.iteration << ',' << format_double(p.mean_reward) << ','
             << format_double(p.std_reward) << '\n';
    return true;
  };
  const TrainingOutcome result = train_policy(c, data, bundle ? &*bundle : nullptr, hooks);
  save_policy_checkpoint(*result.agent, c, result.log.size(), dir / "policy.json");
  write_manifest(dir, "train-policy", c, timer,
                 {{"checkpoint", "policy.json"},
                  {"training_log", "training_log.csv"},
                  {"eval_log", "eval_log.csv"},
                  {"gradient_clipping", c.ppo.clip_gradients},
                  {"max_grad_norm", c.ppo.max_grad_norm},
                  {"diverged", result.diverged}});
  if (result.diverged) {
    err << "training diverged at " << result.error
        << "; policy.json holds the last good iteration\n";
    return kDiverged;
  }
  out << "final mean episode reward (last 10 iterations): "
      << format_double(final_mean_reward(result.log)) << '\n';
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint,
                 const std::string& forecaster, std::optional<std::size_t> episodes,
                 std::size_t first_episode, std::ostream& out) {
  Timer timer;
  PolicyCheckpoint ckpt = load_policy_checkpoint(checkpoint);
  SchemeConfig c = ckpt.config;
  if (!o.config_path.empty()) {
    const SchemeConfig given = resolve(o);
    if (given.env.horizon != c.env.horizon) {
      throw std::invalid_argument("checkpoint was trained with horizon " +
                                  std::to_string(c.env.horizon) + " but the config asks for " +
                                  std::to_string(given.env.horizon));
    }
    // Evaluate on the dataset the given config describes.
    c.source = given.source;
    c.csv_path = given.csv_path;
    c.synth = given.synth;
    c.train_fraction = given.train_fraction;
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  const auto bundle = bundle_for(c, forecaster);
  const fs::path dir = prepare_out(c);
  const LoadedData data = load_data(c);

  std::vector<std::size_t> eps = all_episodes(*data.test, c.env);
  if (first_episode >= eps.size()) {
    throw std::invalid_argument("first episode " + std::to_string(first_episode) +
                                " but the test split holds " + std::to_string(eps.size()));
  }
  eps.erase(eps.begin(), eps.begin() + static_cast<std::ptrdiff_t>(first_episode));
  if (episodes) eps.resize(std::min(*episodes, eps.size()));
  const rl::EvaluationReport rep =
      rl::evaluate(*ckpt.agent, data.test, bundle ? &*bundle : nullptr, eps);

  auto ev = open_out(dir / "evaluation.csv");
  ev << "episode,reward\n";
  for (std::size_t i = 0; i < rep.episodes.size(); ++i) {
    ev << rep.episodes[i] << ',' << format_double(rep.episode_rewards[i]) << '\n';
  }
  {
    env::TrajectoryLogWriter trace(dir / "trace.csv");
    for (std::size_t i = 0; i < rep.traces.size(); ++i) {
      for (const auto& r : rep.traces[i]) trace.write(rep.episodes[i], r);
    }
  }
  json summary{{"episodes", rep.episodes.size()},
               {"mean_reward", rep.mean_reward},
               {"std_reward", rep.std_reward},
               {"action_price_correlation", rep.action_price_correlation}};
  auto sf = open_out(dir / "evaluation_summary.json");
  sf << summary.dump(1) << '\n';
  out << "episodes " << rep.episodes.size() << ", mean reward " << format_double(rep.mean_reward)
      << ", std " << format_double(rep.std_reward) << ", action-price correlation "
      << format_double(rep.action_price_correlation) << '\n';
  write_manifest(dir, "evaluate", c, timer,
                 {{"evaluation", "evaluation.csv"},
                  {"trace", "trace.csv"},
                  {"summary", "evaluation_summary.json"},
                  {"checkpoint", checkpoint}});
  return kOk;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("--seeds: '" + item + "' is not a seed");
    }
  }
  return seeds;
}

int cmd_compare(const CommonOptions& o, const std::string& path_a, const std::string& path_b,
                const std::string& seeds_text, std::ostream& out) {
  Timer timer;
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);
  if (seeds.size() < 2) throw std::invalid_argument("compare needs at least two seeds");
  CommonOptions oa = o, ob = o;
  oa.config_path = path_a;
  ob.config_path = path_b;
  const SchemeConfig base_a = resolve(oa);
  const SchemeConfig base_b = resolve(ob);
  if (base_a.data_hash() != base_b.data_hash()) {
    throw std::invalid_argument("compare: the two configs describe different datasets");
  }
  if (base_a.ppo.iterations != base_b.ppo.iterations || base_a.ppo.workers != base_b.ppo.workers) {
    throw std::invalid_argument("compare: the two configs use different training budgets");
  }
  const fs::path dir = prepare_out(base_a);
  const LoadedData data = load_data(base_a);

  // One frozen bundle per with-prediction config, shared by all seeds.
  std::map<char, forecast::ForecasterBundle> bundles;
  for (const auto& [tag, cfg] : {std::pair{'a', &base_a}, std::pair{'b', &base_b}}) {
    if (cfg->scheme != rl::Scheme::kWithPrediction) continue;
    if (!cfg->forecaster_checkpoint.empty()) {
      bundles.emplace(tag, load_forecaster_checkpoint(cfg->forecaster_checkpoint));
    } else {
      out << "training forecasters for config " << tag << '\n';
      bundles.emplace(tag, train_forecasters(*cfg, data).bundle);
      save_forecaster_checkpoint(bundles.at(tag), *cfg,
                                 dir / (std::string("forecaster_") + tag + ".json"));
    }
  }

  auto curves = open_out(dir / "compare_curves.csv");
  curves << "config,scheme,seed,iteration,mean_reward\n";
  auto table = open_out(dir / "compare.csv");
  table << "seed,final_reward_a,final_reward_b,winner\n";
  std::size_t wins_a = 0, wins_b = 0;
  double sum_a = 0.0, sum_b = 0.0;
  for (std::uint64_t seed : seeds) {
    double finals[2] = {0.0, 0.0};
    for (int side = 0; side < 2; ++side) {
      SchemeConfig cfg = side == 0 ? base_a : base_b;
      cfg.seed = seed;
      const char tag = side == 0 ? 'a' : 'b';
      const auto it = bundles.find(tag);
      const TrainingOutcome r =
          train_policy(cfg, data, it == bundles.end() ? nullptr : &it->second);
      if (r.diverged) throw std::runtime_error("config " + std::string(1, tag) + " seed " +
                                               std::to_string(seed) + " diverged: " + r.error);
      for (const auto& rec : r.log) {
        curves << tag << ',' << rl::scheme_name(cfg.scheme) << ',' << seed << ','
               << rec.iteration << ',' << format_double(rec.mean_reward) << '\n';
      }
      finals[side] = final_mean_reward(r.log);
    }
    const char* winner = finals[0] > finals[1] ? "a" : finals[1] > finals[0] ? "b" : "tie";
    if (finals[0] > finals[1]) ++wins_a;
    if (finals[1] > finals[0]) ++wins_b;
    sum_a += finals[0];
    sum_b += finals[1];
    table << seed << ',' << format_double(finals[0]) << ',' << format_double(finals[1]) << ','
          << winner << '\n';
    out << "seed " << seed << ": a (" << rl::scheme_name(base_a.scheme) << ") "
        << format_double(finals[0]) << ", b (" << rl::scheme_name(base_b.scheme) << ") "
        << format_double(finals[1]) << " -> " << winner << '\n';
  }
  const double p = sign_test_p_value(wins_a, wins_b);
  const double n = static_cast<double>(seeds.size());
  const std::string verdict = p <= 0.05 ? (wins_a > wins_b ? "a higher" : "b higher")
                                        : "no significant difference";
  json summary{{"config_a", {{"path", path_a}, {"scheme", rl::scheme_name(base_a.scheme)}}},
               {"config_b", {{"path", path_b}, {"scheme", rl::scheme_name(base_b.scheme)}}},
               {"seeds", seeds},
               {"mean_final_reward_a", sum_a / n},
               {"mean_final_reward_b", sum_b / n},
               {"wins_a", wins_a},
               {"wins_b", wins_b},
               {"ties", seeds.size() - wins_a - wins_b},
               {"sign_test_p", p},
               {"verdict", verdict}};
  auto sf = open_out(dir / "compare_summary.json");
  sf << summary.dump(1) << '\n';
  out << "wins a " << wins_a << ", wins b " << wins_b << ", sign test p = " << format_double(p)
      << " (" << verdict << ")\n";
  write_manifest(dir, "compare", base_a, timer,
                 {{"table", "compare.csv"},
                  {"curves", "compare_curves.csv"},
                  {"summary", "compare_summary.json"},
                  {"config_b", base_b.to_ini()}});
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Battery microgrid energy management with PPO"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EMSRL_VERSION);

  CommonOptions synth_o, fc_o, pol_o, eval_o, cmp_o;
  std::optional<std::size_t> days;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
  add_common(synth, synth_o);
  synth->add_option("--days", days, "days to generate (overrides synth.days)");

  auto* fc = app.add_subcommand("train-forecaster", "train and score the GRU forecasters");
  add_common(fc, fc_o);

  std::string pol_forecaster;
  auto* pol = app.add_subcommand("train-policy", "train a PPO policy for the configured scheme");
  add_common(pol, pol_o);
  pol->add_option("--forecaster", pol_forecaster, "forecaster checkpoint (with-prediction)");

  std::string eval_ckpt, eval_forecaster;
  std::optional<std::size_t> eval_episodes;
  std::size_t eval_first = 0;
  auto* ev = app.add_subcommand("evaluate", "score a policy checkpoint on held-out episodes");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_ckpt, "policy checkpoint")->required();
  ev->add_option("--forecaster", eval_forecaster, "forecaster checkpoint (with-prediction)");
  ev->add_option("--episodes", eval_episodes, "number of consecutive test episodes");
  ev->add_option("--first-episode", eval_first, "index of the first test episode");

  std::string cmp_a, cmp_b, cmp_seeds = "1,2,3,4,5";
  auto* cmp = app.add_subcommand("compare", "train two configs over matched seeds");
  add_common(cmp, cmp_o);
  cmp->add_option("--config-a", cmp_a, "first config")->required()->check(CLI::ExistingFile);
  cmp->add_option("--config-b", cmp_b, "second config")->required()->check(CLI::ExistingFile);
  cmp->add_option("--seeds", cmp_seeds, "comma-separated training seeds");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << EMSRL_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_o, days, out);
    if (fc->parsed()) return cmd_train_forecaster(fc_o, out);
    if (pol->parsed()) return cmd_train_policy(pol_o, pol_forecaster, out, err);
    if (ev->parsed()) {
      return cmd_evaluate(eval_o, eval_ckpt, eval_forecaster, eval_episodes, eval_first, out);
    }
    if (cmp->parsed()) return cmd_compare(cmp_o, cmp_a, cmp_b, cmp_seeds, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRunError;
  }
  return kUsageError;
}

}  // namespace emsrl::cli
