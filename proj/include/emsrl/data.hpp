#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace emsrl::data {

inline constexpr std::string_view kCsvHeader =
    "timestamp,generation_kw,demand_kw,price";

// Hourly, contiguous series. Timestamps are naive local hours counted from
// 1970-01-01T00:00.
struct TimeSeriesDataset {
  std::vector<std::int64_t> timestamps;
  std::vector<double> generation;  // kW
  std::vector<double> demand;      // kW
  std::vector<double> price;       // currency / kWh

  std::size_t size() const { return timestamps.size(); }
  int hour_of_day(std::size_t index) const;
  // Throws std::invalid_argument when lengths differ, timestamps are not
  // strictly hourly, or a value is non-finite.
  void validate() const;
  TimeSeriesDataset slice(std::size_t begin, std::size_t end) const;
};

// "YYYY-MM-DDTHH:MM[:SS]" (a space may replace the T). Minutes and seconds
// must be zero.
std::int64_t parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t hours);

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t hours_filled = 0;
  std::string summary() const;
};

struct LoadResult {
  TimeSeriesDataset dataset;
  LoadReport report;
};

// Maximum run of missing hours that is linearly interpolated.
inline constexpr std::size_t kMaxFilledGap = 3;

LoadResult load_csv(const std::filesystem::path& path);
void write_csv(const TimeSeriesDataset& dataset,
               const std::filesystem::path& path);

struct SynthConfig {
  std::size_t days = 100;
  std::int64_t start_timestamp = 438288;  // 2020-01-01T00:00

  double base_demand_kw = 300.0;
  double demand_daily_amplitude_kw = 60.0;
  double demand_daily_peak_hour = 19.0;
  double demand_semidaily_amplitude_kw = 20.0;
  double demand_semidaily_peak_hour = 9.0;
  double demand_noise_std_kw = 15.0;

  double generation_baseline_kw = 0.0;
  double peak_generation_kw = 250.0;
  double sunrise_hour = 6.0;
  double sunset_hour = 18.0;
  double generation_noise_std_kw = 30.0;

  double offpeak_price = 0.03;
  double peak_price = 0.09;
  int peak_start_hour = 16;
  int peak_end_hour = 22;  // exclusive
  double price_noise_std = 0.004;
  double price_floor = 0.005;

  std::uint64_t seed = 1;

  void validate() const;
  // Same profiles with every noise term switched off.
  SynthConfig noiseless() const;
};

TimeSeriesDataset synth_generate(const SynthConfig& config);

// Solar profile in [0, 1]: a half sine between sunrise and sunset.
double solar_shape(double hour, double sunrise, double sunset);

struct Split {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
  std::size_t train_end = 0;  // index into the original dataset
};

// Chronological split at the midnight nearest to train_fraction of the data.
// Both parts must hold at least `min_hours` hours.
Split split(const TimeSeriesDataset& dataset, double train_fraction,
            std::size_t min_hours);

}  // namespace emsrl::data
