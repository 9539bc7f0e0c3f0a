#include "emsrl/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "emsrl/random.hpp"
#include "emsrl/text.hpp"

namespace emsrl::forecast {

namespace {
constexpr std::string_view kGruPrefix = "gru";
}

std::string_view quantity_name(Quantity q) {
  switch (q) {
    case Quantity::kGeneration: return "generation";
    case Quantity::kDemand: return "demand";
    case Quantity::kPrice: return "price";
  }
  return "?";
}

Quantity parse_quantity(std::string_view name) {
  for (Quantity q : kQuantities) {
    if (quantity_name(q) == name) return q;
  }
  throw std::invalid_argument("unknown quantity '" + std::string(name) + "'");
}

std::span<const double> series_of(const data::TimeSeriesDataset& ds, Quantity q) {
  switch (q) {
    case Quantity::kGeneration: return ds.generation;
    case Quantity::kDemand: return ds.demand;
    case Quantity::kPrice: return ds.price;
  }
  throw std::invalid_argument("bad quantity");
}

Normalizer Normalizer::fit(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("Normalizer: empty series");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double std = std::sqrt(ss / n);
  // A constant series keeps unit scale so normalization stays invertible.
  return {mean, std > 1e-12 ? std : 1.0};
}

TrainedForecaster train_forecaster(std::span<const double> series,
                                   std::size_t horizon,
                                   const ForecastOptions& options,
                                   std::uint64_t seed, Quantity quantity) {
  if (horizon == 0) throw std::invalid_argument("train_forecaster: horizon must be >= 1");
  if (series.size() <= horizon + 1) {
    throw std::invalid_argument("train_forecaster: series of length " +
                                std::to_string(series.size()) +
                                " too short for horizon " + std::to_string(horizon));
  }
  TrainedForecaster out;
  ForecasterModel& model = out.model;
  model.quantity = quantity;
  model.horizon = horizon;
  model.spec = nn::GruSpec{1, options.hidden, 1};
  model.norm = Normalizer::fit(series);
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(quantity)});
  nn::init_gru(model.params, model.spec, rng, kGruPrefix);

  std::vector<double> z(series.size());
  std::transform(series.begin(), series.end(), z.begin(),
                 [&](double v) { return model.norm.normalize(v); });
  const std::size_t targets = series.size() - horizon;

  out.loss_curve.reserve(options.epochs);
  std::optional<nn::ParameterStore> best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    ad::Graph g;
    const nn::GruVars vars = nn::bind_gru(g, model.params, model.spec, kGruPrefix);
    ad::Var h = g.constant(ad::Tensor::zeros({options.hidden}));
    std::vector<ad::Var> errors;
    errors.reserve(targets);
    for (std::size_t t = 0; t < targets; ++t) {
      const ad::Var x = g.constant(ad::Tensor::vector({z[t]}));
      const nn::GruStep step = nn::gru_step(g, vars, x, h);
      const ad::Var target = g.constant(ad::Tensor::vector({z[t + horizon]}));
      errors.push_back(g.square(g.sub(step.y, target)));
      h = step.h_next;
    }
    const ad::Var total = g.sum(g.concat(errors));
    const double mean_loss = g.value(total).item() / static_cast<double>(targets);
    if (!std::isfinite(mean_loss)) {
      throw std::runtime_error("forecaster training diverged at epoch " +
                               std::to_string(epoch) + " (horizon " +
                               std::to_string(horizon) + ")");
    }
    out.loss_curve.push_back(mean_loss);
    if (options.keep_best && mean_loss < best_loss) {
      best_loss = mean_loss;
      best = model.params;
    }
    g.backward(total, 1.0 / static_cast<double>(targets));
    model.params.accumulate_gradients(g);
    if (options.max_grad_norm > 0.0) {
      const double norm = model.params.gradient_norm();
      if (norm > options.max_grad_norm) model.params.scale_gradients(options.max_grad_norm / norm);
    }
    nn::optimizer_step(model.params, options.learning_rate);
  }
  if (best) model.params = std::move(*best);
  return out;
}

// ---------------------------------------------------------------------------

ForecastStream::ForecastStream(const ForecasterModel& model)
    : model_(&model), hidden_(ad::Tensor::zeros({model.spec.hidden})) {}

void ForecastStream::reset() {
  hidden_ = ad::Tensor::zeros({model_->spec.hidden});
  last_ = 0.0;
  consumed_ = 0;
}

double ForecastStream::push(double value) {
  const ad::Tensor x = ad::Tensor::vector({model_->norm.normalize(value)});
  nn::GruStepResult r =
      nn::gru_step(model_->params, model_->spec, x, hidden_, kGruPrefix);
  hidden_ = std::move(r.h_next);
  last_ = model_->norm.denormalize(r.y.item());
  ++consumed_;
  return last_;
}

double predict_k_step(const ForecasterModel& model,
                      std::span<const double> window, std::size_t warmup) {
  if (window.size() < std::max<std::size_t>(warmup, 1)) {
    throw std::invalid_argument("predict_k_step: window of " +
                                std::to_string(window.size()) +
                                " values shorter than warm-up " +
                                std::to_string(warmup));
  }
  ForecastStream stream(model);
  for (double v : window) stream.push(v);
  return stream.last();
}

PredictionSeries predict_series(const ForecasterModel& model,
                                std::span<const double> series,
                                std::size_t warmup) {
  PredictionSeries out;
  ForecastStream stream(model);
  const std::size_t first = std::max<std::size_t>(warmup, 1) - 1;
  for (std::size_t t = 0; t + model.horizon < series.size(); ++t) {
    const double p = stream.push(series[t]);
    if (t < first) continue;
    out.predicted.push_back(p);
    out.actual.push_back(series[t + model.horizon]);
    out.target_index.push_back(t + model.horizon);
  }
  return out;
}

MapeResult mape(std::span<const double> predictions,
                std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) {
    throw std::invalid_argument("mape: length mismatch");
  }
  MapeResult r;
  double acc = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    if (actuals[i] == 0.0) {
      ++r.dropped_zero;
      continue;
    }
    acc += std::abs(predictions[i] - actuals[i]) / std::abs(actuals[i]);
    ++r.used;
  }
  if (r.used == 0) throw std::invalid_argument("mape: no non-zero actuals");
  r.percent = 100.0 * acc / static_cast<double>(r.used);
  return r;
}

double rmse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) {
    throw std::invalid_argument("rmse: length mismatch");
  }
  if (actuals.empty()) throw std::invalid_argument("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double e = predictions[i] - actuals[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(actuals.size()));
}

// ---------------------------------------------------------------------------

void ForecasterBundle::add(ForecasterModel model) {
  if (model.horizon == 0 || model.horizon > max_horizon_) {
    throw std::invalid_argument("ForecasterBundle: horizon " +
                                std::to_string(model.horizon) + " outside 1.." +
                                std::to_string(max_horizon_));
  }
  if (has(model.quantity, model.horizon)) {
    throw std::invalid_argument("ForecasterBundle: duplicate model");
  }
  models_.push_back(std::move(model));
}

bool ForecasterBundle::has(Quantity q, std::size_t horizon) const {
  return std::any_of(models_.begin(), models_.end(), [&](const ForecasterModel& m) {
    return m.quantity == q && m.horizon == horizon;
  });
}

const ForecasterModel& ForecasterBundle::model(Quantity q, std::size_t horizon) const {
  for (const auto& m : models_) {
    if (m.quantity == q && m.horizon == horizon) return m;
  }
  throw std::out_of_range("no " + std::string(quantity_name(q)) + " forecaster for horizon " +
                          std::to_string(horizon) + " (bundle covers 1.." +
                          std::to_string(max_horizon_) + ")");
}

std::uint64_t ForecasterBundle::checksum() const {
  std::uint64_t h = fnv1a("bundle");
  for (const auto& m : models_) {
    h = fnv1a(quantity_name(m.quantity), h);
    h = fnv1a(std::to_string(m.horizon), h);
    h = fnv1a(hex64(m.params.checksum()), h);
    h = fnv1a(format_double(m.norm.mean) + "/" + format_double(m.norm.std), h);
  }
  return h;
}

BundleTraining train_bundle(
    const data::TimeSeriesDataset& train, std::size_t max_horizon,
    const ForecastOptions& options, std::uint64_t seed,
    const std::function<void(std::size_t, const ForecasterModel&)>& progress) {
  if (max_horizon == 0) throw std::invalid_argument("train_bundle: max horizon must be >= 1");
  BundleTraining out{ForecasterBundle(max_horizon), {}};
  for (Quantity q : kQuantities) {
    for (std::size_t k = 1; k <= max_horizon; ++k) {
      TrainedForecaster t = train_forecaster(series_of(train, q), k, options, seed, q);
      out.loss_curves.push_back(std::move(t.loss_curve));
      out.bundle.add(std::move(t.model));
      if (progress) progress(out.bundle.models().size() - 1, out.bundle.models().back());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

const ForecastReport::Row& ForecastReport::row(Quantity q, std::size_t horizon) const {
  for (const auto& r : rows) {
    if (r.quantity == q && r.horizon == horizon) return r;
  }
  throw std::out_of_range("ForecastReport: missing row");
}

void ForecastReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << quantity_name(r.quantity) << ',' << r.horizon << ','
        << format_double(r.mape_percent) << ',' << format_double(r.rmse) << ','
        << r.points << ',' << r.dropped_zero << '\n';
  }
}

std::string ForecastReport::table() const {
  std::size_t max_h = 0;
  for (const auto& r : rows) max_h = std::max(max_h, r.horizon);
  std::ostringstream os;
  os << "quantity  ";
  for (std::size_t k = 1; k <= max_h; ++k) {
    os << " | MAPE% k=" << k << "  RMSE k=" << k;
  }
  os << '\n';
  for (Quantity q : kQuantities) {
    os << quantity_name(q);
    for (std::size_t pad = quantity_name(q).size(); pad < 10; ++pad) os << ' ';
    for (std::size_t k = 1; k <= max_h; ++k) {
      char buf[64];
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) {
        return r.quantity == q && r.horizon == k;
      });
      if (it == rows.end()) {
        std::snprintf(buf, sizeof buf, " | %9s  %9s", "-", "-");
      } else {
        std::snprintf(buf, sizeof buf, " | %9.3f  %9.4g", it->mape_percent, it->rmse);
      }
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

ForecastReport evaluate_bundle(const ForecasterBundle& bundle,
                               const data::TimeSeriesDataset& test,
                               std::size_t warmup) {
  ForecastReport report;
  for (const auto& m : bundle.models()) {
    const PredictionSeries s = predict_series(m, series_of(test, m.quantity), warmup);
    const MapeResult mp = mape(s.predicted, s.actual);
    report.rows.push_back({m.quantity, m.horizon, mp.percent, rmse(s.predicted, s.actual),
                           s.predicted.size(), mp.dropped_zero});
  }
  return report;
}

// ---------------------------------------------------------------------------

BundleTracker::BundleTracker(const ForecasterBundle& bundle) : bundle_(&bundle) {
  streams_.reserve(bundle.models().size());
  for (const auto& m : bundle.models()) streams_.emplace_back(m);
}

void BundleTracker::reset() {
  for (auto& s : streams_) s.reset();
}

void BundleTracker::push(Quantity q, double value) {
  const auto& models = bundle_->models();
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].quantity == q) streams_[i].push(value);
  }
}

double BundleTracker::forecast(Quantity q, std::size_t steps) const {
  const auto& models = bundle_->models();
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].quantity == q && models[i].horizon == steps) return streams_[i].last();
  }
  // Produces the descriptive out_of_range error.
  bundle_->model(q, steps);
  throw std::out_of_range("forecast horizon unavailable");
}

}  // namespace emsrl::forecast
