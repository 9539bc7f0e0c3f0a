#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emsrl/autodiff.hpp"
#include "emsrl/data.hpp"
#include "emsrl/nn.hpp"

namespace emsrl::forecast {

enum class Quantity { kGeneration, kDemand, kPrice };

inline constexpr std::array<Quantity, 3> kQuantities = {
    Quantity::kGeneration, Quantity::kDemand, Quantity::kPrice};

std::string_view quantity_name(Quantity q);
Quantity parse_quantity(std::string_view name);
std::span<const double> series_of(const data::TimeSeriesDataset& ds, Quantity q);

// Zero-mean, unit-variance scaling fitted on the training split.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  static Normalizer fit(std::span<const double> values);
  double normalize(double x) const { return (x - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
};

struct ForecastOptions {
  std::size_t hidden = 32;
  std::size_t epochs = 600;
  double learning_rate = 1e-2;
  // Hours of history threaded through the GRU before the first scored
  // prediction.
  std::size_t warmup = 24;
  // Return the parameters that scored the lowest epoch loss instead of the
  // last iterate; full-batch Adam occasionally spikes late in training.
  bool keep_best = true;
  // Global-norm clip on the gradient of the mean epoch loss; 0 disables.
  double max_grad_norm = 0.1;
};

// One GRU predicting `horizon` steps ahead from a scalar series.
struct ForecasterModel {
  Quantity quantity = Quantity::kGeneration;
  std::size_t horizon = 1;
  nn::GruSpec spec;
  nn::ParameterStore params{"forecaster"};
  Normalizer norm;
};

struct TrainedForecaster {
  ForecasterModel model;
  std::vector<double> loss_curve;  // mean normalized squared error per epoch
};

// Full-series training: the hidden state is threaded over the whole series,
// per-step squared errors are accumulated over the epoch and a single
// optimizer update is applied per epoch. Throws std::runtime_error naming the
// epoch if the loss becomes non-finite.
TrainedForecaster train_forecaster(std::span<const double> series,
                                   std::size_t horizon,
                                   const ForecastOptions& options,
                                   std::uint64_t seed,
                                   Quantity quantity = Quantity::kGeneration);

// Streams raw values through a model, keeping the hidden state.
class ForecastStream {
 public:
  explicit ForecastStream(const ForecasterModel& model);
  void reset();
  // Consumes x_t and returns the de-normalized forecast of x_{t+horizon}.
  double push(double value);
  double last() const { return last_; }
  std::size_t consumed() const { return consumed_; }

 private:
  const ForecasterModel* model_;
  ad::Tensor hidden_;
  double last_ = 0.0;
  std::size_t consumed_ = 0;
};

// Threads the hidden state over `window` (at least `warmup` values) and
// returns the forecast `model.horizon` steps past its last element.
double predict_k_step(const ForecasterModel& model,
                      std::span<const double> window, std::size_t warmup);

struct PredictionSeries {
  std::vector<double> predicted;
  std::vector<double> actual;
  std::vector<std::size_t> target_index;
};

// Walks the whole series, scoring every target whose input index is at or
// after warmup - 1.
PredictionSeries predict_series(const ForecasterModel& model,
                                std::span<const double> series,
                                std::size_t warmup);

struct MapeResult {
  double percent = 0.0;
  std::size_t used = 0;
  std::size_t dropped_zero = 0;
};

// (100 / n) * sum |p - a| / |a| over points with a != 0.
MapeResult mape(std::span<const double> predictions,
                std::span<const double> actuals);
double rmse(std::span<const double> predictions,
            std::span<const double> actuals);

// All (quantity, horizon) models for horizons 1..max_horizon.
class ForecasterBundle {
 public:
  ForecasterBundle() = default;
  explicit ForecasterBundle(std::size_t max_horizon)
      : max_horizon_(max_horizon) {}

  std::size_t max_horizon() const { return max_horizon_; }
  void add(ForecasterModel model);
  bool has(Quantity q, std::size_t horizon) const;
  const ForecasterModel& model(Quantity q, std::size_t horizon) const;
  const std::vector<ForecasterModel>& models() const { return models_; }
  std::uint64_t checksum() const;

 private:
  std::size_t max_horizon_ = 0;
  std::vector<ForecasterModel> models_;
};

struct BundleTraining {
  ForecasterBundle bundle;
  // Indexed like bundle.models().
  std::vector<std::vector<double>> loss_curves;
};

// Trains every (quantity, horizon) pair on the training split. `progress`
// is called after each model with its index.
BundleTraining train_bundle(
    const data::TimeSeriesDataset& train, std::size_t max_horizon,
    const ForecastOptions& options, std::uint64_t seed,
    const std::function<void(std::size_t, const ForecasterModel&)>& progress = {});

struct ForecastReport {
  struct Row {
    Quantity quantity = Quantity::kGeneration;
    std::size_t horizon = 1;
    double mape_percent = 0.0;
    double rmse = 0.0;
    std::size_t points = 0;
    std::size_t dropped_zero = 0;
  };
  std::vector<Row> rows;

  static constexpr const char* kCsvHeader =
      "quantity,horizon,mape_percent,rmse,points,dropped_zero_actuals";
  const Row& row(Quantity q, std::size_t horizon) const;
  void write_csv(const std::filesystem::path& path) const;
  // Quantities as rows, MAPE/RMSE column pairs per horizon.
  std::string table() const;
};

ForecastReport evaluate_bundle(const ForecasterBundle& bundle,
                               const data::TimeSeriesDataset& test,
                               std::size_t warmup);

// Live forecasts used to augment observations.
class ForecastProvider {
 public:
  virtual ~ForecastProvider() = default;
  virtual std::size_t max_horizon() const = 0;
  // Latest `steps`-ahead forecast for q; throws std::out_of_range when the
  // horizon is not available.
  virtual double forecast(Quantity q, std::size_t steps) const = 0;
};

// Runs one stream per model of a bundle.
class BundleTracker : public ForecastProvider {
 public:
  explicit BundleTracker(const ForecasterBundle& bundle);

  void reset();
  // Feeds one raw value to every model of quantity q.
  void push(Quantity q, double value);

  std::size_t max_horizon() const override { return bundle_->max_horizon(); }
  double forecast(Quantity q, std::size_t steps) const override;

 private:
  const ForecasterBundle* bundle_;
  std::vector<ForecastStream> streams_;
};

}  // namespace emsrl::forecast
