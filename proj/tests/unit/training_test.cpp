#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ccf/training.hpp"

using namespace ccf;

namespace {

FeatureMatrix matrix_of(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  FeatureMatrix m;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t r = 0; r < rows; ++r) m.timestamps.push_back(static_cast<Instant>(r) * 300);
  for (std::size_t c = 0; c < dim; ++c) m.columns.push_back("f" + std::to_string(c));
  m.values.resize(rows * dim);
  for (auto& v : m.values) v = u(rng);
  return m;
}

/// Target at row r is the mean of feature 0 over the preceding 4 rows.
WindowedDataset learnable(std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto m = matrix_of(rows, 3, rng);
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 4; r < rows; ++r) {
    double s = 0;
    for (std::size_t k = 1; k <= 4; ++k) s += m.at(r - k, 0);
    y[r] = s / 4.0;
  }
  return window(m, y, 4);
}

WindowedDataset constant_target(std::size_t rows, double value, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto m = matrix_of(rows, 2, rng);
  return window(m, std::vector<double>(rows, value), 3);
}

ModelDescriptor basic(std::size_t d, std::size_t h) {
  ModelDescriptor m;
  m.input_dim = d;
  m.hidden = h;
  return m;
}

std::vector<double> flat(const Model& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.value.data.begin(), p.value.data.end());
  return out;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

}  // namespace

TEST(Metrics, WorkedExample) {
  const std::vector<double> actual{2, 4, 6}, pred{1, 4, 8};
  auto r = metrics(pred, actual, 0.0, 1.0);
  EXPECT_NEAR(r.mse, 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.rmse, 1.29099, 1e-5);
  EXPECT_NEAR(r.mae, 1.0, 1e-12);
  ASSERT_TRUE(r.mape && r.r2);
  EXPECT_NEAR(*r.mape, 27.7778, 1e-4);
  EXPECT_NEAR(*r.r2, 0.375, 1e-12);
  EXPECT_EQ(r.n, 3u);
}

TEST(Metrics, ScaledErrorsShrinkWithRangeButMapeAndR2DoNot) {
  const std::vector<double> actual{2, 4, 6}, pred{1, 4, 8};
  auto r = metrics(pred, actual, 0.0, 10.0);
  EXPECT_NEAR(r.mse, 5.0 / 300.0, 1e-12);
  EXPECT_NEAR(r.mae, 0.1, 1e-12);
  EXPECT_NEAR(*r.mape, 27.7778, 1e-4);
  EXPECT_NEAR(*r.r2, 0.375, 1e-12);
}

TEST(Metrics, PerfectPredictionAndUndefinedCases) {
  const std::vector<double> a{1, 2, 3};
  auto r = metrics(a, a, 0, 1);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(*r.r2, 1.0);
  EXPECT_EQ(*r.mape, 0.0);
  auto z = metrics(std::vector<double>{1, 1}, std::vector<double>{0, 2}, 0, 1);
  EXPECT_FALSE(z.mape.has_value());
  auto c = metrics(std::vector<double>{1, 2}, std::vector<double>{3, 3}, 0, 1);
  EXPECT_FALSE(c.r2.has_value());
  auto j = to_json(z);
  EXPECT_TRUE(j["MAPE"].is_null());
}

TEST(Metrics, Invariants) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<std::size_t> n(2, 50);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(n(rng)), p(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = u(rng), p[k] = u(rng);
    auto r = metrics(p, a, -5, 5);
    EXPECT_NEAR(r.rmse * r.rmse, r.mse, 1e-12 * std::max(1.0, r.mse));
    EXPECT_LE(r.mae, r.rmse + 1e-15);
  }
}

TEST(Metrics, Errors) {
  EXPECT_EQ(kind_of([] { metrics(std::vector<double>{1, 2}, std::vector<double>{1}, 0, 1); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([] { metrics(std::vector<double>{1}, std::vector<double>{1}, 0, 1); }), ErrorKind::InsufficientData);
  EXPECT_EQ(kind_of([] { metrics(std::vector<double>{1, 2}, std::vector<double>{1, 2}, 1, 1); }), ErrorKind::DegenerateScale);
}

TEST(Training, LearnsASimpleWindowFunction) {
  auto all = learnable(700, 1);
  auto tr = all.subset(0, 500), va = all.subset(500, all.size());
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 30;
  auto m0 = Model(basic(3, 8), cfg.seed);
  const double before = evaluate_mse(m0, va);
  auto res = fit(basic(3, 8), tr, va, cfg);
  EXPECT_LT(res.trained.meta.best_val_loss, 0.2 * before);
  EXPECT_LT(res.trained.meta.best_val_loss, 0.01);
  EXPECT_EQ(evaluate_mse(res.trained.model, va), res.trained.meta.best_val_loss);
  EXPECT_EQ(res.history[res.best_epoch - 1].val_loss, res.trained.meta.best_val_loss);
}

TEST(Training, SeededRunsAreBitIdentical) {
  auto all = learnable(300, 2);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = 3;
  auto a = fit(basic(3, 4), all.subset(0, 200), all.subset(200, all.size()), cfg);
  auto b = fit(basic(3, 4), all.subset(0, 200), all.subset(200, all.size()), cfg);
  EXPECT_EQ(flat(a.trained.model), flat(b.trained.model));
  cfg.seed = 6;
  auto c = fit(basic(3, 4), all.subset(0, 200), all.subset(200, all.size()), cfg);
  EXPECT_NE(flat(a.trained.model), flat(c.trained.model));
}

TEST(Training, EarlyStoppingRestoresBestWeights) {
  // Training pulls predictions toward -1 while validation wants +1, so the
  // validation loss worsens after the first epoch.
  auto tr = constant_target(200, -1.0, 1), va = constant_target(60, 1.0, 2);
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.learning_rate = 0.01;
  cfg.patience = 1;
  cfg.max_epochs = 40;
  auto res = fit(basic(2, 3), tr, va, cfg);
  EXPECT_EQ(res.trained.meta.epochs_run, 2u);
  EXPECT_EQ(res.best_epoch, 1u);
  cfg.max_epochs = 1;
  auto one = fit(basic(2, 3), tr, va, cfg);
  EXPECT_EQ(flat(res.trained.model), flat(one.trained.model));
}

TEST(Training, LogsOneJsonLinePerEpoch) {
  auto all = learnable(200, 3);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.patience = 10;
  std::ostringstream log;
  auto res = fit(basic(3, 2), all.subset(0, 150), all.subset(150, all.size()), cfg, &log);
  std::istringstream in(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["epoch"], ++n);
    EXPECT_TRUE(j.contains("train_loss") && j.contains("val_loss"));
  }
  EXPECT_EQ(n, 4u);
  EXPECT_EQ(res.history.size(), 4u);
}

TEST(Training, ConfigAndDataErrors) {
  auto all = learnable(100, 4);
  auto tr = all.subset(0, 60), va = all.subset(60, all.size());
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_EQ(kind_of([&] { fit(basic(3, 2), tr, va, cfg); }), ErrorKind::Config);
  cfg = {};
  cfg.learning_rate = 0;
  EXPECT_EQ(kind_of([&] { fit(basic(3, 2), tr, va, cfg); }), ErrorKind::Config);
  cfg = {};
  EXPECT_EQ(kind_of([&] { fit(basic(4, 2), tr, va, cfg); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] { fit(basic(3, 2), tr, all.subset(0, 0), cfg); }), ErrorKind::InsufficientData);
}

TEST(Training, DivergenceIsReported) {
  auto tr = constant_target(100, std::numeric_limits<double>::infinity(), 1), va = constant_target(50, 0, 2);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  EXPECT_EQ(kind_of([&] { fit(basic(2, 2), tr, va, cfg); }), ErrorKind::Divergence);
}

TEST(ForwardChain, FoldBoundaries) {
  auto f = forward_chain_folds(120, 3);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].train_end, 60u);
  EXPECT_EQ(f[0].val_end, 80u);
  EXPECT_EQ(f[2].train_end, 100u);
  EXPECT_EQ(f[2].val_end, 120u);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_EQ(f[i].train_end, f[i - 1].val_end);
  EXPECT_EQ(kind_of([] { forward_chain_folds(120, 1); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { forward_chain_folds(5, 3); }), ErrorKind::InsufficientData);
  EXPECT_EQ(kind_of([] { forward_chain_folds(120, 3, 25); }), ErrorKind::InsufficientData);
}

TEST(ForwardChain, ScoreIsMeanOverFolds) {
  double got = forward_chain_cv(120, 3, [](const FoldBoundary& b) { return static_cast<double>(b.val_end); });
  EXPECT_DOUBLE_EQ(got, (80.0 + 100.0 + 120.0) / 3.0);
}

TEST(ForwardChain, NeverValidatesOnTrainingRows) {
  for (std::size_t rows : {40u, 97u, 1000u})
    for (std::size_t k : {2u, 3u, 5u}) {
      auto f = forward_chain_folds(rows, k);
      for (const auto& b : f) {
        EXPECT_LT(b.train_end, b.val_end);
        EXPECT_LE(b.val_end, rows);
      }
      EXPECT_EQ(f.back().val_end, rows);
    }
}
