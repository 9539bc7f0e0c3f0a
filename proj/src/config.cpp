#include "emsrl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "emsrl/text.hpp"

namespace emsrl {

namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

// Typed access with the key path in every error message.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::string str(const std::string& key, const std::string& fallback) const {
    return tree_.get<std::string>(key, fallback);
  }

  double real(const std::string& key, double fallback) const {
    const auto v = tree_.get_optional<std::string>(key);
    if (!v) return fallback;
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad(key, *v, "a number");
    return out;
  }

  std::uint64_t uint(const std::string& key, std::uint64_t fallback) const {
    const auto v = tree_.get_optional<std::string>(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad(key, *v, "a non-negative integer");
    return out;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    const auto v = tree_.get_optional<std::string>(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad(key, *v, "an integer");
    return out;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const auto v = tree_.get_optional<std::string>(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    bad(key, *v, "true or false");
  }

  std::vector<std::size_t> sizes(const std::string& key, std::vector<std::size_t> fallback) const {
    const auto v = tree_.get_optional<std::string>(key);
    if (!v) return fallback;
    std::vector<std::size_t> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t n = 0;
      const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), n);
      if (ec != std::errc() || ptr != item.data() + item.size() || n == 0) {
        bad(key, *v, "a comma-separated list of positive integers");
      }
      out.push_back(n);
    }
    if (out.empty()) bad(key, *v, "a non-empty list");
    return out;
  }

 private:
  [[noreturn]] static void bad(const std::string& key, const std::string& value,
                               const char* expected) {
    throw std::invalid_argument("config: " + key + " = '" + value + "' is not " + expected);
  }
  const pt::ptree& tree_;
};

json tensor_json(const ad::Tensor& t) {
  return json{{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

ad::Tensor tensor_from_json(const json& j) {
  return ad::Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                    j.at("values").get<std::vector<double>>());
}

json store_json(const nn::ParameterStore& store) {
  json out = json::object();
  for (const auto& name : store.names()) out[name] = tensor_json(store.value(name));
  return out;
}

// Copies values into an already-initialized store, insisting on identical
// names and shapes.
void restore_store(nn::ParameterStore& store, const json& j, const std::string& what) {
  const auto names = store.names();
  if (j.size() != names.size()) {
    throw std::runtime_error(what + ": checkpoint holds " + std::to_string(j.size()) +
                             " tensors, network expects " + std::to_string(names.size()));
  }
  for (const auto& name : names) {
    if (!j.contains(name)) throw std::runtime_error(what + ": missing tensor '" + name + "'");
    ad::Tensor t = tensor_from_json(j.at(name));
    if (t.shape() != store.value(name).shape()) {
      throw std::runtime_error(what + ": tensor '" + name + "' has shape " + t.shape_string() +
                               ", network expects " + store.value(name).shape_string());
    }
    store.value(name) = std::move(t);
  }
}

json read_json(const std::filesystem::path& path, const char* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (j.value("format_version", 0) != kCheckpointFormat) {
    throw std::runtime_error("checkpoint '" + path.string() + "' has unsupported format version");
  }
  if (j.value("kind", std::string()) != kind) {
    throw std::runtime_error("checkpoint '" + path.string() + "' is not a " + kind + " checkpoint");
  }
  return j;
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------

void SchemeConfig::validate() const {
  env.validate();
  ppo.validate();
  synth.validate();
  if (scheme == rl::Scheme::kWithPrediction && lookahead == 0) {
    throw std::invalid_argument("config: with-prediction needs lookahead >= 1");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("config: data.train_fraction must lie in (0, 1)");
  }
  if (source == DataSource::kCsv && csv_path.empty()) {
    throw std::invalid_argument("config: data.source = csv needs data.csv_path");
  }
  if (forecast.epochs == 0 || forecast.hidden == 0) {
    throw std::invalid_argument("config: forecast.epochs and forecast.hidden must be positive");
  }
  if (network.gru_hidden == 0 || network.mlp_hidden.empty()) {
    throw std::invalid_argument("config: network sizes must be positive");
  }
  if (eval_interval == 0) throw std::invalid_argument("config: run.eval_interval must be positive");
}

std::string SchemeConfig::to_ini() const {
  std::ostringstream os;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  const auto& d = format_double;
  os << "[run]\n"
     << "seed = " << seed << '\n'
     << "output_dir = " << output_dir << '\n'
     << "eval_interval = " << eval_interval << "\n\n";
  os << "[scheme]\n"
     << "name = " << rl::scheme_name(scheme) << '\n'
     << "lookahead = " << lookahead << '\n'
     << "forecaster_checkpoint = " << forecaster_checkpoint << "\n\n";
  os << "[env]\n"
     << "d_max = " << d(env.d_max) << '\n'
     << "c_max = " << d(env.c_max) << '\n'
     << "capacity_kwh = " << d(env.capacity_kwh) << '\n'
     << "eta_c = " << d(env.eta_c) << '\n'
     << "eta_d = " << d(env.eta_d) << '\n'
     << "lambda1 = " << d(env.lambda1) << '\n'
     << "lambda2 = " << d(env.lambda2) << '\n'
     << "horizon = " << env.horizon << '\n'
     << "initial_soc = " << d(env.initial_soc) << '\n'
     << "train_soc_low = " << d(env.train_soc_low) << '\n'
     << "train_soc_high = " << d(env.train_soc_high) << "\n\n";
  os << "[ppo]\n"
     << "gamma = " << d(ppo.gamma) << '\n'
     << "gae_lambda = " << d(ppo.gae_lambda) << '\n'
     << "clip_epsilon = " << d(ppo.clip_epsilon) << '\n'
     << "update_epochs = " << ppo.update_epochs << '\n'
     << "actor_lr = " << d(ppo.actor_lr) << '\n'
     << "critic_lr = " << d(ppo.critic_lr) << '\n'
     << "workers = " << ppo.workers << '\n'
     << "iterations = " << ppo.iterations << '\n'
     << "normalize_advantages = " << b(ppo.normalize_advantages) << '\n'
     << "clip_gradients = " << b(ppo.clip_gradients) << '\n'
     << "max_grad_norm = " << d(ppo.max_grad_norm) << '\n'
     << "normalize_observations = " << b(ppo.normalize_observations) << '\n'
     << "reward_scale = " << d(ppo.reward_scale) << "\n\n";
  os << "[network]\n"
     << "gru_hidden = " << network.gru_hidden << '\n'
     << "mlp_hidden = " << join_sizes(network.mlp_hidden) << '\n'
     << "initial_log_std = " << d(network.initial_log_std) << "\n\n";
  os << "[forecast]\n"
     << "hidden = " << forecast.hidden << '\n'
     << "epochs = " << forecast.epochs << '\n'
     << "learning_rate = " << d(forecast.learning_rate) << '\n'
     << "warmup = " << forecast.warmup << '\n'
     << "keep_best = " << b(forecast.keep_best) << '\n'
     << "max_grad_norm = " << d(forecast.max_grad_norm) << "\n\n";
  os << "[data]\n"
     << "source = " << (source == DataSource::kCsv ? "csv" : "synth") << '\n'
     << "csv_path = " << csv_path << '\n'
     << "train_fraction = " << d(train_fraction) << "\n\n";
  const auto& s = synth;
  os << "[synth]\n"
     << "days = " << s.days << '\n'
     << "start_timestamp = " << s.start_timestamp << '\n'
     << "base_demand_kw = " << d(s.base_demand_kw) << '\n'
     << "demand_daily_amplitude_kw = " << d(s.demand_daily_amplitude_kw) << '\n'
     << "demand_daily_peak_hour = " << d(s.demand_daily_peak_hour) << '\n'
     << "demand_semidaily_amplitude_kw = " << d(s.demand_semidaily_amplitude_kw) << '\n'
     << "demand_semidaily_peak_hour = " << d(s.demand_semidaily_peak_hour) << '\n'
     << "demand_noise_std_kw = " << d(s.demand_noise_std_kw) << '\n'
     << "generation_baseline_kw = " << d(s.generation_baseline_kw) << '\n'
     << "peak_generation_kw = " << d(s.peak_generation_kw) << '\n'
     << "sunrise_hour = " << d(s.sunrise_hour) << '\n'
     << "sunset_hour = " << d(s.sunset_hour) << '\n'
     << "generation_noise_std_kw = " << d(s.generation_noise_std_kw) << '\n'
     << "offpeak_price = " << d(s.offpeak_price) << '\n'
     << "peak_price = " << d(s.peak_price) << '\n'
     << "peak_start_hour = " << s.peak_start_hour << '\n'
     << "peak_end_hour = " << s.peak_end_hour << '\n'
     << "price_noise_std = " << d(s.price_noise_std) << '\n'
     << "price_floor = " << d(s.price_floor) << '\n'
     << "seed = " << s.seed << '\n';
  return os.str();
}

SchemeConfig SchemeConfig::from_ini(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  static const std::vector<std::string> kSections = {
      "run", "scheme", "env", "ppo", "network", "forecast", "data", "synth"};
  for (const auto& [section, _] : tree) {
    if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
      throw std::invalid_argument("config: unknown section [" + section + "]");
    }
  }
  const Reader r(tree);
  SchemeConfig c;
  c.seed = r.uint("run.seed", c.seed);
  c.output_dir = r.str("run.output_dir", c.output_dir);
  c.eval_interval = r.uint("run.eval_interval", c.eval_interval);

  c.scheme = rl::parse_scheme(r.str("scheme.name", std::string(rl::scheme_name(c.scheme))));
  c.lookahead = r.uint("scheme.lookahead", c.lookahead);
  c.forecaster_checkpoint = r.str("scheme.forecaster_checkpoint", c.forecaster_checkpoint);

  auto& e = c.env;
  e.d_max = r.real("env.d_max", e.d_max);
  e.c_max = r.real("env.c_max", e.c_max);
  e.capacity_kwh = r.real("env.capacity_kwh", e.capacity_kwh);
  e.eta_c = r.real("env.eta_c", e.eta_c);
  e.eta_d = r.real("env.eta_d", e.eta_d);
  e.lambda1 = r.real("env.lambda1", e.lambda1);
  e.lambda2 = r.real("env.lambda2", e.lambda2);
  e.horizon = r.uint("env.horizon", e.horizon);
  e.initial_soc = r.real("env.initial_soc", e.initial_soc);
  e.train_soc_low = r.real("env.train_soc_low", e.train_soc_low);
  e.train_soc_high = r.real("env.train_soc_high", e.train_soc_high);

  auto& p = c.ppo;
  p.gamma = r.real("ppo.gamma", p.gamma);
  p.gae_lambda = r.real("ppo.gae_lambda", p.gae_lambda);
  p.clip_epsilon = r.real("ppo.clip_epsilon", p.clip_epsilon);
  p.update_epochs = r.uint("ppo.update_epochs", p.update_epochs);
  p.actor_lr = r.real("ppo.actor_lr", p.actor_lr);
  p.critic_lr = r.real("ppo.critic_lr", p.critic_lr);
  p.workers = r.uint("ppo.workers", p.workers);
  p.iterations = r.uint("ppo.iterations", p.iterations);
  p.normalize_advantages = r.boolean("ppo.normalize_advantages", p.normalize_advantages);
  p.clip_gradients = r.boolean("ppo.clip_gradients", p.clip_gradients);
  p.max_grad_norm = r.real("ppo.max_grad_norm", p.max_grad_norm);
  p.normalize_observations = r.boolean("ppo.normalize_observations", p.normalize_observations);
  p.reward_scale = r.real("ppo.reward_scale", p.reward_scale);

  auto& n = c.network;
  n.gru_hidden = r.uint("network.gru_hidden", n.gru_hidden);
  n.mlp_hidden = r.sizes("network.mlp_hidden", n.mlp_hidden);
  n.initial_log_std = r.real("network.initial_log_std", n.initial_log_std);

  auto& f = c.forecast;
  f.hidden = r.uint("forecast.hidden", f.hidden);
  f.epochs = r.uint("forecast.epochs", f.epochs);
  f.learning_rate = r.real("forecast.learning_rate", f.learning_rate);
  f.warmup = r.uint("forecast.warmup", f.warmup);
  f.keep_best = r.boolean("forecast.keep_best", f.keep_best);
  f.max_grad_norm = r.real("forecast.max_grad_norm", f.max_grad_norm);

  const std::string source = r.str("data.source", "synth");
  if (source == "synth") {
    c.source = DataSource::kSynth;
  } else if (source == "csv") {
    c.source = DataSource::kCsv;
  } else {
    throw std::invalid_argument("config: data.source must be synth or csv, got '" + source + "'");
  }
  c.csv_path = r.str("data.csv_path", c.csv_path);
  c.train_fraction = r.real("data.train_fraction", c.train_fraction);

  auto& s = c.synth;
  s.days = r.uint("synth.days", s.days);
  s.start_timestamp = r.integer("synth.start_timestamp", s.start_timestamp);
  s.base_demand_kw = r.real("synth.base_demand_kw", s.base_demand_kw);
  s.demand_daily_amplitude_kw = r.real("synth.demand_daily_amplitude_kw", s.demand_daily_amplitude_kw);
  s.demand_daily_peak_hour = r.real("synth.demand_daily_peak_hour", s.demand_daily_peak_hour);
  s.demand_semidaily_amplitude_kw =
      r.real("synth.demand_semidaily_amplitude_kw", s.demand_semidaily_amplitude_kw);
  s.demand_semidaily_peak_hour = r.real("synth.demand_semidaily_peak_hour", s.demand_semidaily_peak_hour);
  s.demand_noise_std_kw = r.real("synth.demand_noise_std_kw", s.demand_noise_std_kw);
  s.generation_baseline_kw = r.real("synth.generation_baseline_kw", s.generation_baseline_kw);
  s.peak_generation_kw = r.real("synth.peak_generation_kw", s.peak_generation_kw);
  s.sunrise_hour = r.real("synth.sunrise_hour", s.sunrise_hour);
  s.sunset_hour = r.real("synth.sunset_hour", s.sunset_hour);
  s.generation_noise_std_kw = r.real("synth.generation_noise_std_kw", s.generation_noise_std_kw);
  s.offpeak_price = r.real("synth.offpeak_price", s.offpeak_price);
  s.peak_price = r.real("synth.peak_price", s.peak_price);
  s.peak_start_hour = static_cast<int>(r.integer("synth.peak_start_hour", s.peak_start_hour));
  s.peak_end_hour = static_cast<int>(r.integer("synth.peak_end_hour", s.peak_end_hour));
  s.price_noise_std = r.real("synth.price_noise_std", s.price_noise_std);
  s.price_floor = r.real("synth.price_floor", s.price_floor);
  s.seed = r.uint("synth.seed", s.seed);

  c.validate();
  return c;
}

SchemeConfig SchemeConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_ini(ss.str());
}

void SchemeConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << to_ini();
}

std::uint64_t SchemeConfig::hash() const { return fnv1a(to_ini()); }

std::uint64_t SchemeConfig::data_hash() const {
  std::string key = "fraction=" + format_double(train_fraction) + ";";
  if (source == DataSource::kCsv) {
    key += "csv=" + csv_path;
  } else {
    // The [synth] block of the canonical text.
    const std::string ini = to_ini();
    key += ini.substr(ini.find("[synth]"));
  }
  return fnv1a(key);
}

LoadedData load_data(const SchemeConfig& config) {
  LoadedData out;
  data::TimeSeriesDataset full;
  if (config.source == DataSource::kCsv) {
    data::LoadResult r = data::load_csv(config.csv_path);
    out.report = r.report.summary();
    full = std::move(r.dataset);
  } else {
    full = data::synth_generate(config.synth);
    out.report = std::to_string(full.size()) + " synthetic hours generated";
  }
  const std::size_t min_hours =
      env::MicrogridEnv::kLeadHours + config.env.horizon + 1 + config.forecast.warmup;
  data::Split s = data::split(full, config.train_fraction, min_hours);
  out.train = std::make_shared<const data::TimeSeriesDataset>(std::move(s.train));
  out.test = std::make_shared<const data::TimeSeriesDataset>(std::move(s.test));
  out.full = std::make_shared<const data::TimeSeriesDataset>(std::move(full));
  return out;
}

// ---------------------------------------------------------------------------

void save_forecaster_checkpoint(const forecast::ForecasterBundle& bundle,
                                const SchemeConfig& config,
                                const std::filesystem::path& path) {
  json j;
  j["format_version"] = kCheckpointFormat;
  j["kind"] = "forecaster";
  j["config_hash"] = hex64(config.hash());
  j["config"] = config.to_ini();
  j["max_horizon"] = bundle.max_horizon();
  j["checksum"] = hex64(bundle.checksum());
  json models = json::array();
  for (const auto& m : bundle.models()) {
    models.push_back({{"quantity", std::string(forecast::quantity_name(m.quantity))},
                      {"horizon", m.horizon},
                      {"hidden", m.spec.hidden},
                      {"norm_mean", m.norm.mean},
                      {"norm_std", m.norm.std},
                      {"params", store_json(m.params)}});
  }
  j["models"] = std::move(models);
  write_json(j, path);
}

forecast::ForecasterBundle load_forecaster_checkpoint(const std::filesystem::path& path) {
  const json j = read_json(path, "forecaster");
  forecast::ForecasterBundle bundle(j.at("max_horizon").get<std::size_t>());
  for (const json& mj : j.at("models")) {
    forecast::ForecasterModel m;
    m.quantity = forecast::parse_quantity(mj.at("quantity").get<std::string>());
    m.horizon = mj.at("horizon").get<std::size_t>();
    m.spec = nn::GruSpec{1, mj.at("hidden").get<std::size_t>(), 1};
    m.norm = {mj.at("norm_mean").get<double>(), mj.at("norm_std").get<double>()};
    for (const auto& [name, tj] : mj.at("params").items()) m.params.add(name, tensor_from_json(tj));
    bundle.add(std::move(m));
  }
  if (hex64(bundle.checksum()) != j.value("checksum", std::string())) {
    throw std::runtime_error("forecaster checkpoint '" + path.string() +
                             "' fails its checksum; the file was modified or truncated");
  }
  return bundle;
}

void save_policy_checkpoint(const rl::Agent& agent, const SchemeConfig& config,
                            std::size_t iterations, const std::filesystem::path& path) {
  json j;
  j["format_version"] = kCheckpointFormat;
  j["kind"] = "policy";
  j["config_hash"] = hex64(config.hash());
  j["config"] = config.to_ini();
  j["scheme"] = std::string(rl::scheme_name(agent.scheme()));
  j["lookahead"] = agent.lookahead();
  j["iterations"] = iterations;
  j["actor"] = store_json(agent.actor);
  j["critic"] = store_json(agent.critic);
  j["obs_norm"] = {{"count", agent.obs_norm.count()},
                   {"mean", agent.obs_norm.mean()},
                   {"m2", agent.obs_norm.m2()}};
  j["checksum"] = hex64(agent.checksum());
  write_json(j, path);
}

PolicyCheckpoint load_policy_checkpoint(const std::filesystem::path& path) {
  const json j = read_json(path, "policy");
  PolicyCheckpoint out;
  out.config = SchemeConfig::from_ini(j.at("config").get<std::string>());
  out.iterations = j.at("iterations").get<std::size_t>();
  Rng unused = make_rng(0);
  out.agent = std::make_unique<rl::Agent>(out.config.scheme, out.config.lookahead,
                                          out.config.network, out.config.env, unused);
  restore_store(out.agent->actor, j.at("actor"), "actor");
  restore_store(out.agent->critic, j.at("critic"), "critic");
  const json& on = j.at("obs_norm");
  out.agent->obs_norm.restore(on.at("count").get<double>(), on.at("mean").get<std::vector<double>>(),
                              on.at("m2").get<std::vector<double>>());
  if (hex64(out.agent->checksum()) != j.value("checksum", std::string())) {
    throw std::runtime_error("policy checkpoint '" + path.string() +
                             "' fails its checksum; the file was modified or truncated");
  }
  return out;
}

}  // namespace emsrl
