#include <gtest/gtest.h>

#include <cmath>

#include "kcal/bdf.hpp"

namespace kcal {
namespace {

std::vector<double> solve_to(BdfSolver& s, double t_end) {
  while (s.t() < t_end) {
    if (s.step(t_end) != BdfStatus::ok) break;
  }
  return {s.y().begin(), s.y().end()};
}

TEST(Bdf, ExponentialDecay) {
  BdfOptions o;
  o.rtol = 1e-8;
  o.atol = {1e-12};
  BdfSolver s(1, [](double, std::span<const double> y, std::span<double> f) { f[0] = -y[0]; }, o);
  const double y0 = 1.0;
  s.reset(0.0, {&y0, 1});
  const auto y = solve_to(s, 2.0);
  EXPECT_EQ(s.t(), 2.0);
  EXPECT_NEAR(y[0], std::exp(-2.0), 1e-7);
}

TEST(Bdf, ErrorShrinksWithTolerance) {
  double prev = 1.0;
  for (double rtol : {1e-4, 1e-6, 1e-8}) {
    BdfOptions o;
    o.rtol = rtol;
    o.atol = {1e-14, 1e-14};
    // Harmonic oscillator, exact solution (cos t, -sin t).
    BdfSolver s(2, [](double, std::span<const double> y, std::span<double> f) {
      f[0] = y[1];
      f[1] = -y[0];
    }, o);
    const double y0[] = {1.0, 0.0};
    s.reset(0.0, y0);
    const auto y = solve_to(s, 5.0);
    const double err = std::hypot(y[0] - std::cos(5.0), y[1] + std::sin(5.0));
    EXPECT_LT(err, prev);
    EXPECT_LT(err, 200.0 * rtol);
    prev = err;
  }
}

// Robertson's chemical kinetics problem; reference at t = 40 from the
// standard stiff test set.
TEST(Bdf, RobertsonStiff) {
  BdfOptions o;
  o.rtol = 1e-9;
  o.atol = {1e-14, 1e-16, 1e-14};
  BdfSolver s(3, [](double, std::span<const double> y, std::span<double> f) {
    f[0] = -0.04 * y[0] + 1e4 * y[1] * y[2];
    f[2] = 3e7 * y[1] * y[1];
    f[1] = -f[0] - f[2];
  }, o);
  const double y0[] = {1.0, 0.0, 0.0};
  s.reset(0.0, y0);
  const auto y = solve_to(s, 40.0);
  EXPECT_NEAR(y[0], 0.7158270687193772, 1e-7);
  EXPECT_NEAR(y[1], 9.185534764557954e-06, 1e-11);
  EXPECT_NEAR(y[2], 0.2841637457452581, 1e-7);
  EXPECT_LT(s.stats().steps, 2000u);
  EXPECT_NEAR(y[0] + y[1] + y[2], 1.0, 1e-12);
}

TEST(Bdf, AnalyticJacobianIsUsed) {
  BdfOptions o;
  o.rtol = 1e-8;
  o.atol = {1e-12};
  int jac_calls = 0;
  BdfSolver s(
      1, [](double, std::span<const double> y, std::span<double> f) { f[0] = -1000.0 * (y[0] - 1.0); }, o,
      [&](double, std::span<const double>, std::span<const double>, Eigen::Ref<Eigen::MatrixXd> J) {
        ++jac_calls;
        J(0, 0) = -1000.0;
      });
  const double y0 = 0.0;
  s.reset(0.0, {&y0, 1});
  const auto y = solve_to(s, 1.0);
  EXPECT_GT(jac_calls, 0);
  EXPECT_EQ(static_cast<std::size_t>(jac_calls), s.stats().jacobian_evals);
  EXPECT_NEAR(y[0], 1.0, 1e-8);
  EXPECT_LT(s.stats().steps, 300u);
}

TEST(Bdf, StepsNeverPassStopTime) {
  BdfOptions o;
  o.rtol = 1e-6;
  o.atol = {1e-10};
  BdfSolver s(1, [](double t, std::span<const double>, std::span<double> f) { f[0] = std::cos(t); }, o);
  const double y0 = 0.0;
  s.reset(0.0, {&y0, 1});
  for (double stop : {0.1, 0.35, 1.0}) {
    while (s.t() < stop) {
      ASSERT_EQ(s.step(stop), BdfStatus::ok);
      ASSERT_LE(s.t(), stop);
    }
    EXPECT_EQ(s.t(), stop);
    EXPECT_NEAR(s.y()[0], std::sin(stop), 1e-5);
  }
}

TEST(Bdf, StepLimit) {
  BdfOptions o;
  o.rtol = 1e-8;
  o.atol = {1e-12};
  o.max_steps = 5;
  BdfSolver s(1, [](double, std::span<const double> y, std::span<double> f) { f[0] = -y[0]; }, o);
  const double y0 = 1.0;
  s.reset(0.0, {&y0, 1});
  BdfStatus st = BdfStatus::ok;
  for (int i = 0; i < 10 && st == BdfStatus::ok; ++i) st = s.step(100.0);
  EXPECT_EQ(st, BdfStatus::too_many_steps);
}

TEST(Bdf, NonFiniteRhsIsReported) {
  BdfOptions o;
  o.rtol = 1e-6;
  o.atol = {1e-10};
  BdfSolver s(1, [](double, std::span<const double> y, std::span<double> f) { f[0] = y[0] * y[0]; }, o);
  const double y0 = 1.0;
  s.reset(0.0, {&y0, 1});
  BdfStatus st = BdfStatus::ok;
  for (int i = 0; i < 100000 && st == BdfStatus::ok && s.t() < 2.0; ++i) st = s.step(2.0);
  EXPECT_NE(st, BdfStatus::ok);
  EXPECT_LT(s.t(), 1.0);
}

TEST(Bdf, InvalidOptionsThrow) {
  auto rhs = [](double, std::span<const double>, std::span<double>) {};
  BdfOptions o;
  o.atol = {1e-12};
  o.rtol = 0.0;
  EXPECT_THROW(BdfSolver(1, rhs, o), std::invalid_argument);
  o.rtol = 1e-6;
  o.atol = {1e-12, 1e-12};
  EXPECT_THROW(BdfSolver(1, rhs, o), std::invalid_argument);
  o.atol = {1e-12};
  o.max_order = 6;
  EXPECT_THROW(BdfSolver(1, rhs, o), std::invalid_argument);
}

} // namespace
} // namespace kcal
