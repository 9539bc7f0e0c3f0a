#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "emsrl/data.hpp"
#include "emsrl/forecast.hpp"
#include "support/temp_dir.hpp"

namespace emsrl::forecast {
namespace {

std::vector<double> sinusoid(std::size_t hours, double offset = 10.0, double amplitude = 5.0) {
  std::vector<double> out(hours);
  for (std::size_t i = 0; i < hours; ++i) {
    out[i] = offset + amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / 24.0);
  }
  return out;
}

ForecastOptions quick(std::size_t epochs, std::size_t hidden = 16) {
  ForecastOptions o;
  o.epochs = epochs;
  o.hidden = hidden;
  return o;
}

TEST(Normalizer, RoundTrip) {
  const std::vector<double> xs{3.0, -1.5, 250.0, 0.004, 17.25};
  const Normalizer n = Normalizer::fit(xs);
  for (double x : xs) EXPECT_NEAR(n.denormalize(n.normalize(x)), x, 1e-12);
  EXPECT_EQ(Normalizer::fit(std::vector<double>(10, 4.0)).std, 1.0);
}

TEST(Mape, HandEvaluated) {
  EXPECT_DOUBLE_EQ(mape(std::vector{110.0}, std::vector{100.0}).percent, 10.0);
  EXPECT_DOUBLE_EQ(mape(std::vector{5.0, 7.0}, std::vector{5.0, 7.0}).percent, 0.0);
  EXPECT_DOUBLE_EQ(mape(std::vector{90.0, 110.0}, std::vector{100.0, 100.0}).percent, 10.0);
}

TEST(Mape, ZeroActualsAreDroppedAndAllZeroIsAnError) {
  const MapeResult r = mape(std::vector{1.0, 110.0}, std::vector{0.0, 100.0});
  EXPECT_DOUBLE_EQ(r.percent, 10.0);
  EXPECT_EQ(r.used, 1u);
  EXPECT_EQ(r.dropped_zero, 1u);
  EXPECT_THROW(mape(std::vector{1.0, 2.0}, std::vector{0.0, 0.0}), std::invalid_argument);
}

TEST(Rmse, HandEvaluated) {
  EXPECT_EQ(rmse(std::vector{1.0, 2.0}, std::vector{1.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(rmse(std::vector{1.0, 3.0}, std::vector{0.0, 0.0}), std::sqrt(5.0));
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(rmse(std::vector{1.0}, std::vector{1.0, 2.0}), std::invalid_argument);
}

TEST(Quantity, NamesRoundTrip) {
  for (Quantity q : kQuantities) EXPECT_EQ(parse_quantity(quantity_name(q)), q);
  EXPECT_THROW(parse_quantity("wind"), std::invalid_argument);
}

TEST(TrainForecaster, ConstantSeriesIsLearned) {
  const std::vector<double> series(24 * 6, 42.0);
  const TrainedForecaster t = train_forecaster(series, 1, quick(200, 8), 1);
  EXPECT_LT(t.loss_curve.back(), 1e-6);
  EXPECT_NEAR(predict_k_step(t.model, series, 24), 42.0, 1e-3);
}

TEST(TrainForecaster, SinusoidOneStepMape) {
  const std::vector<double> series = sinusoid(24 * 12);
  const std::vector<double> train(series.begin(), series.begin() + 24 * 8);
  const std::vector<double> test(series.begin() + 24 * 8, series.end());
  const TrainedForecaster t = train_forecaster(train, 1, quick(200), 3);
  const PredictionSeries p = predict_series(t.model, test, 24);
  EXPECT_LT(mape(p.predicted, p.actual).percent, 5.0);
}

TEST(TrainForecaster, SameSeedSameParameters) {
  const std::vector<double> series = sinusoid(24 * 4);
  const auto a = train_forecaster(series, 2, quick(30), 5);
  const auto b = train_forecaster(series, 2, quick(30), 5);
  const auto c = train_forecaster(series, 2, quick(30), 6);
  EXPECT_TRUE(a.model.params.same_values(b.model.params));
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_FALSE(a.model.params.same_values(c.model.params));
}

TEST(TrainForecaster, LossCurveHasOneEntryPerEpoch) {
  const auto t = train_forecaster(sinusoid(24 * 3), 1, quick(25), 1);
  EXPECT_EQ(t.loss_curve.size(), 25u);
  for (double l : t.loss_curve) EXPECT_GE(l, 0.0);
}

TEST(TrainForecaster, NonFiniteLossNamesEpoch) {
  std::vector<double> series = sinusoid(24 * 3);
  series[30] = std::numeric_limits<double>::infinity();
  try {
    train_forecaster(series, 1, quick(5), 1);
    FAIL() << "expected a divergence error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(TrainForecaster, SeriesTooShortIsAnError) {
  EXPECT_THROW(train_forecaster(sinusoid(2), 1, quick(5), 1), std::invalid_argument);
}

TEST(Prediction, WindowShorterThanWarmupIsAnError) {
  const auto t = train_forecaster(sinusoid(24 * 3), 1, quick(5), 1);
  EXPECT_THROW(predict_k_step(t.model, sinusoid(10), 24), std::invalid_argument);
}

TEST(Prediction, StreamMatchesWindowedPrediction) {
  const std::vector<double> series = sinusoid(24 * 4);
  const auto t = train_forecaster(series, 2, quick(20), 1);
  ForecastStream stream(t.model);
  for (std::size_t i = 0; i < 40; ++i) stream.push(series[i]);
  EXPECT_EQ(stream.consumed(), 40u);
  const std::span<const double> window(series.data(), 40);
  EXPECT_EQ(stream.last(), predict_k_step(t.model, window, 24));
  stream.reset();
  EXPECT_EQ(stream.consumed(), 0u);
}

TEST(Prediction, SeriesTargetsAreHorizonAhead) {
  const std::vector<double> series = sinusoid(24 * 3);
  const auto t = train_forecaster(series, 2, quick(5), 1);
  const PredictionSeries p = predict_series(t.model, series, 24);
  ASSERT_FALSE(p.target_index.empty());
  EXPECT_EQ(p.target_index.front(), 23u + 2u);
  EXPECT_EQ(p.target_index.back(), series.size() - 1);
  for (std::size_t i = 0; i < p.actual.size(); ++i) EXPECT_EQ(p.actual[i], series[p.target_index[i]]);
}

data::TimeSeriesDataset constant_dataset(std::size_t days, double g, double d, double p) {
  data::TimeSeriesDataset ds;
  for (std::size_t i = 0; i < days * 24; ++i) {
    ds.timestamps.push_back(438288 + static_cast<std::int64_t>(i));
    ds.generation.push_back(g);
    ds.demand.push_back(d);
    ds.price.push_back(p);
  }
  return ds;
}

TEST(Bundle, ConstantDatasetForecastsConstant) {
  const auto ds = constant_dataset(4, 120.0, 300.0, 0.05);
  const BundleTraining bt = train_bundle(ds, 2, quick(150, 8), 1);
  EXPECT_EQ(bt.bundle.models().size(), 6u);
  EXPECT_EQ(bt.loss_curves.size(), 6u);
  BundleTracker tracker(bt.bundle);
  for (std::size_t i = 0; i < 30; ++i) {
    tracker.push(Quantity::kGeneration, 120.0);
    tracker.push(Quantity::kDemand, 300.0);
    tracker.push(Quantity::kPrice, 0.05);
  }
  for (std::size_t k = 1; k <= 2; ++k) {
    EXPECT_NEAR(tracker.forecast(Quantity::kGeneration, k), 120.0, 1.2);
    EXPECT_NEAR(tracker.forecast(Quantity::kDemand, k), 300.0, 3.0);
    EXPECT_NEAR(tracker.forecast(Quantity::kPrice, k), 0.05, 5e-4);
  }
  EXPECT_THROW(tracker.forecast(Quantity::kPrice, 3), std::out_of_range);
}

TEST(Bundle, RejectsDuplicatesAndBadHorizons) {
  const auto t = train_forecaster(sinusoid(24 * 3), 1, quick(2), 1, Quantity::kDemand);
  ForecasterBundle bundle(1);
  bundle.add(t.model);
  EXPECT_TRUE(bundle.has(Quantity::kDemand, 1));
  EXPECT_THROW(bundle.add(t.model), std::invalid_argument);
  ForecasterModel far = t.model;
  far.horizon = 2;
  EXPECT_THROW(bundle.add(far), std::invalid_argument);
  EXPECT_THROW(bundle.model(Quantity::kPrice, 1), std::out_of_range);
}

TEST(Bundle, NormalizationUsesTrainingSplitOnly) {
  data::SynthConfig cfg;
  cfg.days = 10;
  const auto full = data::synth_generate(cfg);
  const auto s = data::split(full, 0.7, 49);
  const BundleTraining bt = train_bundle(s.train, 1, quick(2, 4), 1);
  for (const ForecasterModel& m : bt.bundle.models()) {
    const Normalizer expected = Normalizer::fit(series_of(s.train, m.quantity));
    EXPECT_EQ(m.norm.mean, expected.mean);
    EXPECT_EQ(m.norm.std, expected.std);
  }
}

TEST(Report, LayoutAndCsv) {
  data::SynthConfig cfg = data::SynthConfig{}.noiseless();
  cfg.days = 6;
  const auto full = data::synth_generate(cfg);
  const auto s = data::split(full, 0.5, 49);
  const BundleTraining bt = train_bundle(s.train, 2, quick(3, 4), 1);
  const ForecastReport rep = evaluate_bundle(bt.bundle, s.test, 24);
  ASSERT_EQ(rep.rows.size(), 6u);
  for (const auto& row : rep.rows) {
    EXPECT_GE(row.mape_percent, 0.0);
    EXPECT_GE(row.rmse, 0.0);
  }
  // Night-time generation is zero and cannot enter MAPE.
  EXPECT_GT(rep.row(Quantity::kGeneration, 1).dropped_zero, 0u);

  emsrl::testing::TempDir dir("report");
  rep.write_csv(dir / "r.csv");
  const std::string text = emsrl::testing::read_text(dir / "r.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), ForecastReport::kCsvHeader);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_NE(rep.table().find("price"), std::string::npos);
}

}  // namespace
}  // namespace emsrl::forecast
