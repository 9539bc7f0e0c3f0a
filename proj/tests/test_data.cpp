#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "emsrl/data.hpp"
#include "support/temp_dir.hpp"

namespace emsrl::data {
namespace {

using emsrl::testing::TempDir;
using emsrl::testing::write_text;

std::string csv_rows(std::int64_t first, std::size_t count, std::int64_t skip_from = -1,
                     std::size_t skip = 0) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t ts = first + static_cast<std::int64_t>(i);
    if (skip_from >= 0 && ts >= skip_from && ts < skip_from + static_cast<std::int64_t>(skip)) continue;
    out << format_timestamp(ts) << ',' << 10.0 * static_cast<double>(i) << ",300,0.05\n";
  }
  return out.str();
}

TEST(Timestamp, RoundTrip) {
  EXPECT_EQ(parse_timestamp("2020-01-01T00:00"), 438288);
  EXPECT_EQ(parse_timestamp("2020-01-01 05:00:00"), 438293);
  EXPECT_EQ(format_timestamp(438288), "2020-01-01T00:00:00");
  for (std::int64_t h : {0LL, 12345LL, 438288LL, 500000LL}) {
    EXPECT_EQ(parse_timestamp(format_timestamp(h)), h);
  }
  EXPECT_THROW(parse_timestamp("2020-01-01T00:30"), std::invalid_argument);
  EXPECT_THROW(parse_timestamp("yesterday"), std::invalid_argument);
}

TEST(LoadCsv, WellFormedFile) {
  TempDir dir("data");
  write_text(dir / "a.csv", csv_rows(438288, 48));
  const LoadResult r = load_csv(dir / "a.csv");
  EXPECT_EQ(r.dataset.size(), 48u);
  EXPECT_EQ(r.report.hours_filled, 0u);
  EXPECT_EQ(r.dataset.generation[3], 30.0);
}

TEST(LoadCsv, SmallGapIsInterpolated) {
  TempDir dir("data");
  write_text(dir / "gap.csv", csv_rows(438288, 48, 438298, 2));
  const LoadResult r = load_csv(dir / "gap.csv");
  EXPECT_EQ(r.dataset.size(), 48u);
  EXPECT_EQ(r.report.hours_filled, 2u);
  EXPECT_NE(r.report.summary().find("2 hours filled"), std::string::npos);
  EXPECT_NEAR(r.dataset.generation[10], 100.0, 1e-12);
  EXPECT_NEAR(r.dataset.generation[11], 110.0, 1e-12);
}

TEST(LoadCsv, LargeGapIsAnError) {
  TempDir dir("data");
  write_text(dir / "gap.csv", csv_rows(438288, 48, 438298, 4));
  EXPECT_THROW(load_csv(dir / "gap.csv"), std::runtime_error);
}

TEST(LoadCsv, DuplicateTimestampIsNamed) {
  TempDir dir("data");
  std::string text = csv_rows(438288, 3);
  text += "2020-01-01T02:00:00,1,1,1\n";
  write_text(dir / "dup.csv", text);
  try {
    load_csv(dir / "dup.csv");
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("2020-01-01T02:00"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, MalformedRowNamesLine) {
  TempDir dir("data");
  std::string text = csv_rows(438288, 3);
  text += "2020-01-01T03:00,abc,1,1\n";
  write_text(dir / "bad.csv", text);
  try {
    load_csv(dir / "bad.csv");
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, NonMonotonicAndHeaderErrors) {
  TempDir dir("data");
  write_text(dir / "back.csv", std::string(kCsvHeader) +
                                   "\n2020-01-01T05:00,1,1,1\n2020-01-01T04:00,1,1,1\n");
  EXPECT_THROW(load_csv(dir / "back.csv"), std::runtime_error);
  write_text(dir / "hdr.csv", "time,g,d,p\n");
  EXPECT_THROW(load_csv(dir / "hdr.csv"), std::runtime_error);
  EXPECT_THROW(load_csv(dir / "missing.csv"), std::runtime_error);
}

TEST(LoadCsv, WriteThenLoadIsLossless) {
  TempDir dir("data");
  SynthConfig cfg;
  cfg.days = 3;
  const TimeSeriesDataset ds = synth_generate(cfg);
  write_csv(ds, dir / "round.csv");
  const TimeSeriesDataset back = load_csv(dir / "round.csv").dataset;
  EXPECT_EQ(back.timestamps, ds.timestamps);
  EXPECT_EQ(back.generation, ds.generation);
  EXPECT_EQ(back.demand, ds.demand);
  EXPECT_EQ(back.price, ds.price);
}

TEST(Synth, NoiselessSeriesArePeriodic) {
  SynthConfig cfg = SynthConfig{}.noiseless();
  cfg.days = 4;
  const TimeSeriesDataset ds = synth_generate(cfg);
  for (std::size_t i = 24; i < ds.size(); ++i) {
    EXPECT_EQ(ds.generation[i], ds.generation[i - 24]);
    EXPECT_EQ(ds.demand[i], ds.demand[i - 24]);
    EXPECT_EQ(ds.price[i], ds.price[i - 24]);
  }
  EXPECT_EQ(ds.generation[0], 0.0);
}

TEST(Synth, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.days = 10;
  cfg.seed = 42;
  const TimeSeriesDataset a = synth_generate(cfg), b = synth_generate(cfg);
  EXPECT_EQ(a.generation, b.generation);
  EXPECT_EQ(a.demand, b.demand);
  EXPECT_EQ(a.price, b.price);
  cfg.seed = 43;
  EXPECT_NE(synth_generate(cfg).demand, a.demand);
}

TEST(Synth, RejectsTooFewDays) {
  SynthConfig cfg;
  cfg.days = 1;
  EXPECT_THROW(synth_generate(cfg), std::invalid_argument);
}

TEST(Synth, DatasetInvariantsAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthConfig cfg;
    cfg.days = 30;
    cfg.seed = seed;
    const TimeSeriesDataset ds = synth_generate(cfg);
    ASSERT_NO_THROW(ds.validate());
    ASSERT_EQ(ds.size(), 720u);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ASSERT_GE(ds.generation[i], 0.0);
      ASSERT_GE(ds.demand[i], 0.0);
      ASSERT_GE(ds.price[i], cfg.price_floor);
    }
    const double mean_demand =
        std::accumulate(ds.demand.begin(), ds.demand.end(), 0.0) / static_cast<double>(ds.size());
    EXPECT_NEAR(mean_demand, cfg.base_demand_kw, 0.05 * cfg.base_demand_kw);
  }
}

TEST(Synth, SolarShapeIsZeroAtNight) {
  EXPECT_EQ(solar_shape(0.0, 6.0, 18.0), 0.0);
  EXPECT_EQ(solar_shape(20.0, 6.0, 18.0), 0.0);
  EXPECT_NEAR(solar_shape(12.0, 6.0, 18.0), 1.0, 1e-12);
}

TEST(Split, EightyTwentyDays) {
  SynthConfig cfg;
  cfg.days = 100;
  const TimeSeriesDataset ds = synth_generate(cfg);
  const Split s = split(ds, 0.8, 49);
  EXPECT_EQ(s.train.size(), 80u * 24u);
  EXPECT_EQ(s.test.size(), 20u * 24u);
  EXPECT_EQ(s.train_end % 24, 0u);
  EXPECT_EQ(s.test.hour_of_day(0), 0);

  std::set<std::int64_t> train(s.train.timestamps.begin(), s.train.timestamps.end());
  std::set<std::int64_t> all(train);
  for (std::int64_t t : s.test.timestamps) {
    EXPECT_FALSE(train.contains(t));
    all.insert(t);
  }
  EXPECT_EQ(all.size(), ds.size());
}

TEST(Split, TooSmallIsAnError) {
  SynthConfig cfg;
  cfg.days = 3;
  EXPECT_THROW(split(synth_generate(cfg), 0.8, 49), std::invalid_argument);
  EXPECT_THROW(split(synth_generate(cfg), 1.0, 1), std::invalid_argument);
}

TEST(Dataset, ValidateRejectsBrokenSeries) {
  TimeSeriesDataset ds;
  ds.timestamps = {0, 1, 3};
  ds.generation = ds.demand = ds.price = {1.0, 1.0, 1.0};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.timestamps = {0, 1, 2};
  ds.price[1] = std::nan("");
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.price = {1.0};
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace emsrl::data
