#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ccf/features.hpp"
#include "ccf/ingest.hpp"
#include "ccf/synthplant.hpp"
#include "support/frames.hpp"

using namespace ccf;
using ccf::testing::make_frame;

namespace {

FeatureConfig plant_config(bool target_lags = false) {
  auto c = FeatureConfig::hourly(300, cesar1_schema().input_columns, columns::kAmpFtir);
  c.include_target_lags = target_lags;
  return c;
}

// Independent recomputation of a trailing window statistic at row t.
double brute_mean(const std::vector<double>& v, std::size_t t, std::size_t w) {
  double s = 0;
  for (std::size_t k = 0; k < w; ++k) s += v[t - k];
  return s / static_cast<double>(w);
}

double brute_std(const std::vector<double>& v, std::size_t t, std::size_t w) {
  const double m = brute_mean(v, t, w);
  double s = 0;
  for (std::size_t k = 0; k < w; ++k) s += (v[t - k] - m) * (v[t - k] - m);
  return std::sqrt(s / static_cast<double>(w - 1));
}

}  // namespace

TEST(Scaler, FitsMinMaxAndRoundTrips) {
  auto f = make_frame({{"a", {0.0, 5.0, 10.0}}});
  auto s = fit_scaler(f, {"a"});
  EXPECT_EQ(s.min[0], 0.0);
  EXPECT_EQ(s.max[0], 10.0);
  for (double x : {3.0, 7.0}) EXPECT_EQ(s.invert(0, s.scale(0, x)), x);
}

TEST(Scaler, ConstantColumnIsDegenerate) {
  auto f = make_frame({{"flat", {2.0, 2.0, 2.0}}});
  try {
    fit_scaler(f, {"flat"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateScale);
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
}

TEST(Scaler, UsesOnlyTheTrainingRows) {
  auto f = make_frame({{"a", {1.0, 3.0, 2.0, 100.0}}});
  auto s = fit_scaler(f, {"a"}, 0, 3);
  EXPECT_EQ(s.max[0], 3.0);
  EXPECT_GT(s.scale(0, 100.0), 1.0);
}

TEST(Scaler, AffineInvertWithinTolerance) {
  std::mt19937_64 rng(2);
  auto v = ccf::testing::random_values(rng, 200, -1e3, 1e3);
  auto s = fit_scaler(make_frame({{"a", v}}), {"a"});
  for (double x : v) {
    EXPECT_NEAR(s.invert(0, s.scale(0, x)), x, 1e-12 * std::max(1.0, std::abs(x)));
    EXPECT_GE(s.scale(0, x), 0.0);
    EXPECT_LE(s.scale(0, x), 1.0);
  }
}

TEST(Lags, ExampleAndWarmup) {
  auto f = make_lags(make_frame({{"x", {1, 2, 3, 4, 5}}}), {"x"}, 2);
  auto lag = f.column("x_lag2");
  EXPECT_TRUE(is_missing(lag[0]));
  EXPECT_TRUE(is_missing(lag[1]));
  EXPECT_EQ(lag[2], 1.0);
  EXPECT_EQ(lag[3], 2.0);
  EXPECT_EQ(lag[4], 3.0);
}

TEST(Lags, Errors) {
  auto f = make_frame({{"x", {1, 2, 3}}});
  EXPECT_THROW(make_lags(f, {"x"}, 0), Error);
  try {
    make_lags(f, {"x"}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(Lags, IndexOracleOnRandomFrame) {
  std::mt19937_64 rng(9);
  auto f = ccf::testing::random_frame(rng, 50, 2);
  for (std::size_t L : {1u, 6u, 12u}) {
    auto g = make_lags(f, {"c0"}, L);
    auto raw = f.column("c0");
    auto lag = g.column(lag_name("c0", L));
    for (std::size_t t = L; t < 50; ++t) EXPECT_EQ(lag[t], raw[t - L]);
  }
}

TEST(Rolling, Examples) {
  auto m = make_rolling(make_frame({{"x", {1, 2, 3, 4}}}), {"x"}, {3}, {RollingStat::Mean});
  auto mean = m.column("x_rmean3");
  EXPECT_TRUE(is_missing(mean[0]));
  EXPECT_TRUE(is_missing(mean[1]));
  EXPECT_DOUBLE_EQ(mean[2], 2.0);
  EXPECT_DOUBLE_EQ(mean[3], 3.0);

  auto s = make_rolling(make_frame({{"x", {1, 3}}}), {"x"}, {2}, {RollingStat::Std});
  EXPECT_NEAR(s.column("x_rstd2")[1], 1.41421356, 1e-8);

  auto c = make_rolling(make_frame({{"x", std::vector<double>(20, 4.25)}}), {"x"}, {6}, {RollingStat::Mean});
  for (std::size_t t = 5; t < 20; ++t) EXPECT_EQ(c.column("x_rmean6")[t], 4.25);
}

TEST(Rolling, StdWindowOfOneIsDegenerate) {
  try {
    make_rolling(make_frame({{"x", {1, 2, 3}}}), {"x"}, {1}, {RollingStat::Std});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateWindow);
  }
}

TEST(Rolling, BruteForceOracleOnRandomFrames) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = ccf::testing::random_frame(rng, 60, 1);
    std::vector<double> raw(f.column("c0").begin(), f.column("c0").end());
    auto g = make_rolling(f, {"c0"}, {2, 6, 12}, {RollingStat::Mean, RollingStat::Std});
    for (std::size_t w : {2u, 6u, 12u}) {
      auto mean = g.column(rolling_name("c0", w, RollingStat::Mean));
      auto sd = g.column(rolling_name("c0", w, RollingStat::Std));
      for (std::size_t t = 0; t + 1 < w; ++t) EXPECT_TRUE(is_missing(mean[t]));
      for (std::size_t t = w - 1; t < 60; ++t) {
        EXPECT_NEAR(mean[t], brute_mean(raw, t, w), 1e-12);
        EXPECT_NEAR(sd[t], brute_std(raw, t, w), 1e-12);
      }
    }
  }
}

TEST(Rolling, HomogeneousUnderScaling) {
  std::mt19937_64 rng(4);
  auto f = ccf::testing::random_frame(rng, 40, 1);
  std::vector<double> scaled(f.column("c0").begin(), f.column("c0").end());
  for (auto& x : scaled) x *= 1.15;
  auto g = make_frame({{"c0", scaled}});
  auto a = make_lags(make_rolling(f, {"c0"}, {6}, {RollingStat::Mean, RollingStat::Std}), {"c0"}, 3);
  auto b = make_lags(make_rolling(g, {"c0"}, {6}, {RollingStat::Mean, RollingStat::Std}), {"c0"}, 3);
  for (const char* name : {"c0_rmean6", "c0_rstd6", "c0_lag3"})
    for (std::size_t t = 6; t < 40; ++t) EXPECT_NEAR(b.column(name)[t], 1.15 * a.column(name)[t], 1e-12) << name;
}

TEST(FeatureConfig, CountsAndOrdering) {
  auto c = plant_config();
  EXPECT_EQ(c.lag_steps, 12u);
  EXPECT_EQ(c.rolling_windows, (std::vector<std::size_t>{6, 12, 24, 36}));
  EXPECT_EQ(c.dim(), 80u);
  EXPECT_EQ(c.warmup(), 35u);
  auto names = c.column_names();
  EXPECT_EQ(names[0], columns::kFgInletFlow);
  EXPECT_EQ(names[8], std::string(columns::kFgInletFlow) + "_lag12");
  EXPECT_EQ(names[16], std::string(columns::kFgInletFlow) + "_rmean6");
  EXPECT_EQ(names[17], std::string(columns::kFgInletFlow) + "_rstd6");
  EXPECT_EQ(names[18], std::string(columns::kFgInletFlow) + "_rmean12");
  // target lag plus 4 windows x 2 stats on the target
  EXPECT_EQ(plant_config(true).dim(), 81u + 8u);
  EXPECT_EQ(plant_config().column_names(), plant_config().column_names());
  EXPECT_EQ(plant_config().fingerprint(), plant_config().fingerprint());
  EXPECT_NE(plant_config().fingerprint(), plant_config(true).fingerprint());
}

TEST(FeatureConfig, HourlyAtSixHundredSeconds) {
  auto c = FeatureConfig::hourly(600, {"a"}, "y");
  EXPECT_EQ(c.lag_steps, 6u);
  EXPECT_EQ(c.rolling_windows, (std::vector<std::size_t>{3, 6, 12, 18}));
  EXPECT_NO_THROW(c.validate());
  c.lag_steps = 12;
  EXPECT_THROW(c.validate(), Error);
}

TEST(BuildMatrix, ScaledWarmupDroppedAndInRange) {
  auto frame = synth::generate(synth::cesar1_defaults(1, 3.0));
  auto c = plant_config();
  auto scaler = fit_feature_scaler(frame, c, frame.rows());
  auto m = build_matrix(frame, c, scaler);
  EXPECT_EQ(m.dim(), 80u);
  EXPECT_EQ(m.rows(), frame.rows() - c.warmup());
  EXPECT_EQ(m.first_raw_row, c.warmup());
  EXPECT_FALSE(m.out_of_range);
  for (double v : m.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(BuildMatrix, TestRowsBeyondTrainingRangeAreFlagged) {
  auto frame = synth::generate(synth::cesar1_defaults(1, 3.0));
  auto c = plant_config();
  auto scaler = fit_feature_scaler(frame, c, 100);
  EXPECT_TRUE(build_matrix(frame, c, scaler).out_of_range);
}

TEST(BuildMatrix, NoLagNoRollingIsScaledRawInputs) {
  std::mt19937_64 rng(8);
  auto f = ccf::testing::random_frame(rng, 30, 3);
  FeatureConfig c;
  c.inputs = {"c0", "c1"};
  c.target = "c2";
  c.lag_steps = 0;
  c.rolling_stats.clear();
  auto s = fit_scaler(f, {"c0", "c1", "c2"});
  auto m = build_matrix(f, c, s);
  ASSERT_EQ(m.dim(), 2u);
  ASSERT_EQ(m.rows(), 30u);
  for (std::size_t r = 0; r < 30; ++r) {
    EXPECT_EQ(m.at(r, 0), s.scale(0, f.at(r, "c0")));
    EXPECT_EQ(m.at(r, 1), s.scale(1, f.at(r, "c1")));
  }
}

TEST(Window, CountsAndTargets) {
  FeatureMatrix m;
  m.columns = {"a"};
  for (std::size_t r = 0; r < 10; ++r) m.timestamps.push_back(static_cast<Instant>(r)), m.values.push_back(r * 1.0);
  std::vector<double> y(10);
  for (std::size_t r = 0; r < 10; ++r) y[r] = 100.0 + static_cast<double>(r);
  auto ds = window(m, y, 4);
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.target(0), y[4]);
  EXPECT_THROW(window(m, y, 10), Error);
}

TEST(Window, BruteForceEnumeration) {
  std::mt19937_64 rng(12);
  for (std::size_t n = 5; n <= 50; ++n)
    for (std::size_t W = 1; W <= 4; ++W) {
      FeatureMatrix m;
      m.columns = {"a", "b"};
      auto vals = ccf::testing::random_values(rng, 2 * n);
      m.values = vals;
      for (std::size_t r = 0; r < n; ++r) m.timestamps.push_back(static_cast<Instant>(r));
      auto y = ccf::testing::random_values(rng, n);
      auto ds = window(m, y, W);
      ASSERT_EQ(ds.size(), n - W);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        auto in = ds.inputs(i);
        for (std::size_t k = 0; k < W * 2; ++k) ASSERT_EQ(in[k], vals[i * 2 + k]);
        ASSERT_EQ(ds.target(i), y[i + W]);
      }
      // stride 1: consecutive windows share W-1 rows
      if (ds.size() > 1 && W > 1) EXPECT_EQ(ds.inputs(1)[0], ds.inputs(0)[2]);
    }
}

TEST(Window, SubsetSharesStorage) {
  FeatureMatrix m;
  m.columns = {"a"};
  for (std::size_t r = 0; r < 20; ++r) m.timestamps.push_back(static_cast<Instant>(r)), m.values.push_back(r * 1.0);
  auto ds = window(m, std::vector<double>(m.values), 3);
  auto sub = ds.subset(5, 9);
  EXPECT_EQ(sub.size(), 4u);
  EXPECT_EQ(sub.target(0), ds.target(5));
  EXPECT_EQ(sub.inputs(0).data(), ds.inputs(5).data());
}
