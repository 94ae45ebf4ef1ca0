#include <cmath>

#include <gtest/gtest.h>

#include "ccf/hyperopt.hpp"

using namespace ccf;
using namespace ccf::hpo;

namespace {

HyperoptSpec quadratic_spec(std::uint64_t seed) {
  HyperoptSpec s;
  s.dims = {Dimension::continuous("x", 0.0, 1.0)};
  s.seed = seed;
  return s;
}

double quadratic(const Params& p) { return (p.at("x") - 0.3) * (p.at("x") - 0.3); }

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

TEST(Dimension, DecodeEncode) {
  auto c = Dimension::continuous("a", 2, 6);
  EXPECT_DOUBLE_EQ(c.decode(0.25), 3.0);
  EXPECT_DOUBLE_EQ(c.encode(3.0), 0.25);
  auto l = Dimension::log_uniform("lr", 1e-4, 1e-2);
  EXPECT_NEAR(l.decode(0.5), 1e-3, 1e-15);
  EXPECT_NEAR(l.encode(1e-3), 0.5, 1e-12);
  auto i = Dimension::integer("h", 16, 128);
  EXPECT_EQ(i.decode(0.0), 16.0);
  EXPECT_EQ(i.decode(1.0), 128.0);
  EXPECT_EQ(i.decode(0.5), 72.0);
  auto ch = Dimension::choice("b", {32, 64, 128});
  EXPECT_EQ(ch.decode(0.0), 32.0);
  EXPECT_EQ(ch.decode(0.5), 64.0);
  EXPECT_EQ(ch.decode(1.0), 128.0);
  EXPECT_EQ(ch.decode(ch.encode(128)), 128.0);
  EXPECT_EQ(kind_of([&] { ch.encode(7); }), ErrorKind::InvalidArgument);
}

TEST(Dimension, DecodedValuesStayInBounds) {
  auto i = Dimension::integer("h", 16, 128);
  auto l = Dimension::log_uniform("lr", 1e-4, 1e-2);
  for (int k = -5; k <= 105; ++k) {
    const double u = k / 100.0;
    EXPECT_GE(i.decode(u), 16.0);
    EXPECT_LE(i.decode(u), 128.0);
    EXPECT_GE(l.decode(u), 1e-4 * (1 - 1e-12));
    EXPECT_LE(l.decode(u), 1e-2 * (1 + 1e-12));
  }
}

TEST(Spec, Validation) {
  auto s = quadratic_spec(0);
  s.budget = 4;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::Config);
  s = quadratic_spec(0);
  s.candidates = 100;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::Config);
  s = quadratic_spec(0);
  s.dims.clear();
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::Config);
  s = quadratic_spec(0);
  s.dims = {Dimension::log_uniform("lr", 0, 1)};
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::Config);
  EXPECT_EQ(HyperoptSpec::for_architecture(Architecture::Stacked).dims.size(), 4u);
  EXPECT_EQ(HyperoptSpec::for_architecture(Architecture::Basic).dims.size(), 3u);
}

TEST(ExpectedImprovement, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(expected_improvement(1.0, 0.0, 3.0), 2.0);
  EXPECT_DOUBLE_EQ(expected_improvement(5.0, 0.0, 3.0), 0.0);
  // at mean == best, EI = sd * phi(0)
  EXPECT_NEAR(expected_improvement(2.0, 0.5, 2.0), 0.5 / std::sqrt(2 * std::numbers::pi), 1e-15);
  EXPECT_GT(expected_improvement(2.0, 1.0, 2.0), expected_improvement(2.0, 0.5, 2.0));
}

TEST(GaussianProcess, InterpolatesObservations) {
  std::vector<std::vector<double>> x{{0.1}, {0.4}, {0.7}, {0.9}};
  std::vector<double> y{3.0, -1.0, 2.0, 0.5};
  GaussianProcess gp(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [mu, sd] = gp.predict(x[i]);
    EXPECT_NEAR(mu, y[i], 1e-3);
    EXPECT_LT(sd, 0.05);
  }
  EXPECT_GT(gp.predict({0.25}).second, gp.predict({0.4}).second);
}

TEST(BayesOpt, FindsQuadraticMinimum) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = bayes_opt(quadratic, quadratic_spec(seed));
    ASSERT_EQ(r.trace.size(), 20u);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      EXPECT_EQ(r.trace[i].from_design, i < 5);
      if (i > 0) EXPECT_LE(r.trace[i].incumbent, r.trace[i - 1].incumbent);
    }
    EXPECT_EQ(r.best_value, r.trace.back().incumbent);
    if (std::abs(r.best.at("x") - 0.3) <= 0.05) ++hits;
  }
  EXPECT_GE(hits, 19);
}

TEST(BayesOpt, SameSeedSameTrace) {
  auto a = bayes_opt(quadratic, quadratic_spec(3));
  auto b = bayes_opt(quadratic, quadratic_spec(3));
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].unit, b.trace[i].unit);
}

TEST(BayesOpt, FailedTrialsArePenalizedNotFatal) {
  int calls = 0;
  auto obj = [&](const Params& p) {
    ++calls;
    return p.at("x") > 0.8 ? std::numeric_limits<double>::quiet_NaN() : quadratic(p);
  };
  auto spec = quadratic_spec(1);
  spec.budget = 12;
  auto r = bayes_opt(obj, spec);
  EXPECT_EQ(calls, 12);
  for (const auto& e : r.trace) {
    EXPECT_EQ(e.penalized, e.params.at("x") > 0.8);
    if (e.penalized) EXPECT_EQ(e.objective, kPenalty);
  }
  EXPECT_LT(r.best_value, kPenalty);
}

TEST(BayesOpt, IntegerAndChoiceAxesAreSnapped) {
  HyperoptSpec s;
  s.dims = {Dimension::integer("h", 1, 9), Dimension::choice("b", {32, 64, 128})};
  s.budget = 8;
  auto r = bayes_opt([](const Params& p) { return std::abs(p.at("h") - 4) + (p.at("b") == 64 ? 0 : 1); }, s);
  for (const auto& e : r.trace) {
    EXPECT_EQ(e.params.at("h"), std::round(e.params.at("h")));
    const double b = e.params.at("b");
    EXPECT_TRUE(b == 32 || b == 64 || b == 128);
  }
  auto j = to_json(r.trace[0]);
  EXPECT_TRUE(j.contains("incumbent") && j.contains("params"));
}
