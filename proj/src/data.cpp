#include "emsrl/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "emsrl/random.hpp"
#include "emsrl/text.hpp"

namespace emsrl::data {

namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("bad " + std::string(what) + " in timestamp");
  }
  return value;
}

double parse_double(std::string_view text, std::size_t line,
                    std::string_view column) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() ||
      !std::isfinite(value)) {
    throw std::runtime_error("line " + std::to_string(line) + ": malformed " +
                             std::string(column) + " value '" +
                             std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Timestamps

std::int64_t parse_timestamp(std::string_view text) {
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  // YYYY-MM-DDTHH:MM[:SS]
  if (text.size() != 16 && text.size() != 19) {
    throw std::invalid_argument("timestamp '" + std::string(text) +
                                "' is not YYYY-MM-DDTHH:MM[:SS]");
  }
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || (text.size() == 19 && text[16] != ':')) {
    throw std::invalid_argument("timestamp '" + std::string(text) +
                                "' is not YYYY-MM-DDTHH:MM[:SS]");
  }
  using namespace std::chrono;
  const int y = parse_int(text.substr(0, 4), "year");
  const int mo = parse_int(text.substr(5, 2), "month");
  const int d = parse_int(text.substr(8, 2), "day");
  const int h = parse_int(text.substr(11, 2), "hour");
  const int mi = parse_int(text.substr(14, 2), "minute");
  const int s = text.size() == 19 ? parse_int(text.substr(17, 2), "second") : 0;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23) {
    throw std::invalid_argument("timestamp '" + std::string(text) +
                                "' is not a valid date/hour");
  }
  if (mi != 0 || s != 0) {
    throw std::invalid_argument("timestamp '" + std::string(text) +
                                "' is not on the hour");
  }
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days_since_epoch) * 24 + h;
}

std::string format_timestamp(std::int64_t hours) {
  using namespace std::chrono;
  std::int64_t day_count = hours / 24;
  std::int64_t hour = hours % 24;
  if (hour < 0) {
    hour += 24;
    --day_count;
  }
  const year_month_day ymd{sys_days{days{day_count}}};
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-'
     << std::setw(2) << static_cast<unsigned>(ymd.month()) << '-'
     << std::setw(2) << static_cast<unsigned>(ymd.day()) << 'T' << std::setw(2)
     << hour << ":00:00";
  return os.str();
}

// ---------------------------------------------------------------------------
// Dataset

int TimeSeriesDataset::hour_of_day(std::size_t index) const {
  const std::int64_t h = timestamps.at(index) % 24;
  return static_cast<int>(h < 0 ? h + 24 : h);
}

void TimeSeriesDataset::validate() const {
  const std::size_t n = timestamps.size();
  if (generation.size() != n || demand.size() != n || price.size() != n) {
    throw std::invalid_argument("dataset: series lengths differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && timestamps[i] != timestamps[i - 1] + 1) {
      throw std::invalid_argument("dataset: timestamps not hourly at " +
                                  format_timestamp(timestamps[i]));
    }
    if (!std::isfinite(generation[i]) || !std::isfinite(demand[i]) ||
        !std::isfinite(price[i])) {
      throw std::invalid_argument("dataset: non-finite value at " +
                                  format_timestamp(timestamps[i]));
    }
  }
}

TimeSeriesDataset TimeSeriesDataset::slice(std::size_t begin,
                                           std::size_t end) const {
  if (begin > end || end > size()) {
    throw std::out_of_range("dataset: slice out of range");
  }
  auto cut = [&](const auto& v) {
    return std::decay_t<decltype(v)>(v.begin() + static_cast<std::ptrdiff_t>(begin),
                                     v.begin() + static_cast<std::ptrdiff_t>(end));
  };
  TimeSeriesDataset out;
  out.timestamps = cut(timestamps);
  out.generation = cut(generation);
  out.demand = cut(demand);
  out.price = cut(price);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string LoadReport::summary() const {
  return std::to_string(rows_read) + " rows read, " +
         std::to_string(hours_filled) + " hours filled";
}

LoadResult load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("dataset '" + path.string() + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw std::runtime_error("dataset header must be '" +
                             std::string(kCsvHeader) + "', got '" + line + "'");
  }

  LoadResult result;
  TimeSeriesDataset& ds = result.dataset;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected 4 fields, got " +
                               std::to_string(fields.size()));
    }
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(fields[0]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    const double g = parse_double(fields[1], line_no, "generation_kw");
    const double d = parse_double(fields[2], line_no, "demand_kw");
    const double p = parse_double(fields[3], line_no, "price");
    ++result.report.rows_read;

    if (!ds.timestamps.empty()) {
      const std::int64_t prev = ds.timestamps.back();
      if (ts == prev) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": duplicate timestamp " +
                                 format_timestamp(ts));
      }
      if (ts < prev) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": timestamp " + format_timestamp(ts) +
                                 " precedes " + format_timestamp(prev));
      }
      const std::int64_t missing = ts - prev - 1;
      if (missing > static_cast<std::int64_t>(kMaxFilledGap)) {
        throw std::runtime_error(
            "line " + std::to_string(line_no) + ": gap of " +
            std::to_string(missing) + " hours before " + format_timestamp(ts) +
            " exceeds " + std::to_string(kMaxFilledGap));
      }
      const double g0 = ds.generation.back();
      const double d0 = ds.demand.back();
      const double p0 = ds.price.back();
      for (std::int64_t k = 1; k <= missing; ++k) {
        const double w =
            static_cast<double>(k) / static_cast<double>(missing + 1);
        ds.timestamps.push_back(prev + k);
        ds.generation.push_back(g0 + w * (g - g0));
        ds.demand.push_back(d0 + w * (d - d0));
        ds.price.push_back(p0 + w * (p - p0));
        ++result.report.hours_filled;
      }
    }
    ds.timestamps.push_back(ts);
    ds.generation.push_back(g);
    ds.demand.push_back(d);
    ds.price.push_back(p);
  }
  ds.validate();
  return result;
}

void write_csv(const TimeSeriesDataset& dataset,
               const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << kCsvHeader << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << format_timestamp(dataset.timestamps[i]) << ','
        << format_double(dataset.generation[i]) << ','
        << format_double(dataset.demand[i]) << ','
        << format_double(dataset.price[i]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

void SynthConfig::validate() const {
  if (days < 2) throw std::invalid_argument("synth: days must be at least 2");
  if (demand_noise_std_kw < 0 || generation_noise_std_kw < 0 ||
      price_noise_std < 0) {
    throw std::invalid_argument("synth: noise standard deviations must be >= 0");
  }
  if (!(price_floor > 0.0)) {
    throw std::invalid_argument("synth: price floor must be positive");
  }
  if (!(sunrise_hour < sunset_hour)) {
    throw std::invalid_argument("synth: sunrise must precede sunset");
  }
  if (peak_start_hour < 0 || peak_end_hour > 24 ||
      peak_start_hour > peak_end_hour) {
    throw std::invalid_argument("synth: bad peak-hour window");
  }
}

SynthConfig SynthConfig::noiseless() const {
  SynthConfig c = *this;
  c.demand_noise_std_kw = 0.0;
  c.generation_noise_std_kw = 0.0;
  c.price_noise_std = 0.0;
  return c;
}

double solar_shape(double hour, double sunrise, double sunset) {
  if (hour <= sunrise || hour >= sunset) return 0.0;
  return std::sin(std::numbers::pi * (hour - sunrise) / (sunset - sunrise));
}

TimeSeriesDataset synth_generate(const SynthConfig& c) {
  c.validate();
  Rng rng = make_rng(c.seed, {0x5e7d});
  std::normal_distribution<double> normal(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  TimeSeriesDataset ds;
  const std::size_t n = c.days * 24;
  ds.timestamps.reserve(n);
  ds.generation.reserve(n);
  ds.demand.reserve(n);
  ds.price.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t ts = c.start_timestamp + static_cast<std::int64_t>(i);
    const int hour = static_cast<int>(((ts % 24) + 24) % 24);
    const double h = static_cast<double>(hour);
    // Draw all three noise terms every hour so the stream layout does not
    // depend on which terms are enabled.
    const double nd = normal(rng);
    const double ng = normal(rng);
    const double np = normal(rng);

    double demand =
        c.base_demand_kw +
        c.demand_daily_amplitude_kw *
            std::cos(two_pi * (h - c.demand_daily_peak_hour) / 24.0) +
        c.demand_semidaily_amplitude_kw *
            std::cos(2.0 * two_pi * (h - c.demand_semidaily_peak_hour) / 24.0) +
        c.demand_noise_std_kw * nd;
    demand = std::max(0.0, demand);

    const double shape = solar_shape(h, c.sunrise_hour, c.sunset_hour);
    double generation = c.generation_baseline_kw + shape * c.peak_generation_kw;
    if (shape > 0.0) generation += c.generation_noise_std_kw * ng;
    generation = std::max(0.0, generation);

    const bool peak = hour >= c.peak_start_hour && hour < c.peak_end_hour;
    double price = (peak ? c.peak_price : c.offpeak_price) + c.price_noise_std * np;
    price = std::max(c.price_floor, price);

    ds.timestamps.push_back(ts);
    ds.generation.push_back(generation);
    ds.demand.push_back(demand);
    ds.price.push_back(price);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Split

Split split(const TimeSeriesDataset& dataset, double train_fraction,
            std::size_t min_hours) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train fraction must be in (0, 1)");
  }
  const double target = train_fraction * static_cast<double>(dataset.size());
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < dataset.size(); ++i) {
    if (dataset.hour_of_day(i) != 0) continue;
    const double distance = std::abs(static_cast<double>(i) - target);
    if (distance < best_distance) {
      best_distance = distance;
      best = i;
    }
  }
  if (best == 0 || best < min_hours || dataset.size() - best < min_hours) {
    throw std::invalid_argument(
        "split: dataset of " + std::to_string(dataset.size()) +
        " hours cannot be split at fraction " + std::to_string(train_fraction) +
        " with at least " + std::to_string(min_hours) + " hours per side");
  }
  Split s;
  s.train_end = best;
  s.train = dataset.slice(0, best);
  s.test = dataset.slice(best, dataset.size());
  return s;
}

}  // namespace emsrl::data
