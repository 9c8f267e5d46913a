#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <memory>

#include "stork/analysis.hpp"
#include "stork/solve.hpp"

using namespace stork;

namespace {

Batch<> scalar(double v) { return Batch<>::Constant(1, 1, v); }

VelocityField<> linear_field(double k) {
  VelocityField<> v;
  v.dim = 1;
  v.eval = [k](const Batch<>& x, double) -> Batch<> { return k * x; };
  return v;
}

VelocityField<> constant_field(double c) {
  VelocityField<> v;
  v.dim = 1;
  v.eval = [c](const Batch<>& x, double) -> Batch<> { return Batch<>::Constant(x.rows(), x.cols(), c); };
  return v;
}

// Wraps a field and counts calls.
struct Counted {
  VelocityField<> field;
  std::shared_ptr<int> calls = std::make_shared<int>(0);
  explicit Counted(VelocityField<> inner) {
    field.dim = inner.dim;
    auto c = calls;
    field.eval = [inner, c](const Batch<>& x, double t) {
      ++*c;
      return inner(x, t);
    };
  }
};

SolverConfig stork_cfg(Method m, int s, int n, SubstageMode mode = SubstageMode::taylor) {
  SolverConfig cfg;
  cfg.method = m;
  cfg.substeps = s;
  cfg.taylor_order = n;
  cfg.substage_mode = mode;
  return cfg;
}

bool bitwise_equal(const Batch<>& a, const Batch<>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

TEST(Baseline, EulerExample) {
  EXPECT_DOUBLE_EQ(baseline_step<double>(Method::euler, scalar(1), 1.0, 1.0, linear_field(2))(0, 0), -1.0);
}

TEST(Baseline, Rk4IsExactOnConstantField) {
  int nfe = 0;
  const Batch<> x = baseline_step<double>(Method::rk4, scalar(0.25), 1.0, 0.5, constant_field(1), &nfe);
  EXPECT_EQ(x(0, 0), -0.25);
  EXPECT_EQ(nfe, 4);
}

TEST(Baseline, HeunBoundaryPoint) {
  EXPECT_NEAR(std::abs(amplification_factor(Method::heun, 1, -2.0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(amplification_factor(Method::euler, 1, -2.0)), 1.0, 1e-15);
}

TEST(Baseline, Rk4AmplificationIsTruncatedExponential) {
  for (double z : {-0.3, -1.0, -2.5}) {
    const double expect = 1 + z + z * z / 2 + z * z * z / 6 + z * z * z * z / 24;
    EXPECT_NEAR(amplification_factor(Method::rk4, 1, z).real(), expect, 1e-14);
  }
}

TEST(Baseline, Ab2FallsBackToEulerThenUsesMemory) {
  BaselineMemory<double> mem;
  const auto v = linear_field(1);
  int nfe = 0;
  const Batch<> x1 = baseline_step<double>(Method::ab2, scalar(1), 1.0, 0.1, v, &nfe, &mem);
  EXPECT_DOUBLE_EQ(x1(0, 0), 0.9);
  const Batch<> x2 = baseline_step<double>(Method::ab2, x1, 0.9, 0.1, v, &nfe, &mem);
  EXPECT_DOUBLE_EQ(x2(0, 0), 0.9 - 0.1 * (1.5 * 0.9 - 0.5 * 1.0));
  EXPECT_EQ(nfe, 2);
  EXPECT_THROW(baseline_step<double>(Method::ab2, x1, 0.9, 0.1, v), ConfigError);
}

TEST(Startup, ZeroFieldLeavesStateUnchanged) {
  const TimeGrid g = TimeGrid::uniform(10, 0, 1);
  Batch<> x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  for (int n : {2, 3}) {
    const auto r = startup_flow<double>(x, g, zero_field(2), n);
    EXPECT_TRUE(bitwise_equal(r.state, x));
    EXPECT_EQ(r.nfe_used, n + 1);
    EXPECT_EQ(static_cast<int>(r.states.size()), n + 1);
    EXPECT_EQ(static_cast<int>(r.cache.stored().size()), n + 1);
  }
}

TEST(Startup, ConstantFieldIsTransportedExactly) {
  const TimeGrid g = TimeGrid::flow_shift(12, 3.0, 0, 1);
  const auto r = startup_flow<double>(scalar(5), g, constant_field(2), 3);
  // x <- x - h v summed over the traversed steps.
  EXPECT_NEAR(r.state(0, 0), 5 - 2 * (g.t(12) - g.t(9)), 1e-14);
}

TEST(Startup, StiffExampleMatchesHandRecursion) {
  const TimeGrid g = TimeGrid::uniform(10, 0, 1);
  const double h = 0.1, k = 2.0;
  const auto r = startup_flow<double>(scalar(1), g, linear_field(k), 3);
  const double vM = k, xh = 1 - 0.5 * h * vM, vh = k * xh;
  const double x9 = xh - 0.75 * h * vh + 0.25 * h * vM;
  const double x8 = x9 - 1.5 * h * (k * x9) + 0.5 * h * vM;
  const double x7 = x8 - 1.5 * h * (k * x8) + 0.5 * h * (k * x9);
  EXPECT_NEAR(r.states[1](0, 0), x9, 1e-15);
  EXPECT_NEAR(r.states[2](0, 0), x8, 1e-15);
  EXPECT_NEAR(r.state(0, 0), x7, 1e-15);
  // Second-order start: within a few local errors of e^{-k t}.
  EXPECT_NEAR(r.state(0, 0), std::exp(-k * 0.3), 5e-3);
}

TEST(Startup, RejectsShortGrid) {
  EXPECT_THROW(startup_flow<double>(scalar(1), TimeGrid::uniform(3, 0, 1), linear_field(1), 3), ConfigError);
  EXPECT_NO_THROW(startup_flow<double>(scalar(1), TimeGrid::uniform(3, 0, 1), linear_field(1), 2));
}

TEST(Superstep, ZeroFieldIsBitwiseIdentity) {
  Batch<> x(3, 2);
  x << 1e-300, -2, 3.5, 1e300, 0, -7;
  const auto z = zero_field(3);
  for (int s : {2, 3, 10, 57}) {
    const Batch<> y = stork2_superstep<double>(x, 1.0, 0.3, rkg2_coeffs(s), nullptr, z, SubstageMode::exact);
    EXPECT_TRUE(bitwise_equal(x, y)) << s;
  }
  for (int s : {5, 9, 20, 152}) {
    const Batch<> y = stork4_superstep<double>(x, 1.0, 0.3, rock4_coeffs(s), nullptr, z, SubstageMode::exact);
    EXPECT_TRUE(bitwise_equal(x, y)) << s;
  }
}

TEST(Superstep, Stork4ExactAmplificationMatchesStabilityPolynomial) {
  for (int s : {5, 9, 20, 64}) {
    const Rock4Coefficients k = rock4_coeffs(s);
    const Amplification R(Method::stork4, s);
    for (int i = 0; i < 100; ++i) {
      // Points on an arc inside the stability interval, away from the real roots.
      const double u = (i + 0.5) / 100.0;
      const std::complex<double> z(-k.stability_extent * u, 0.3 + 0.2 * std::sin(7.0 * i));
      const std::complex<double> p = rock4_stability_poly(k, z);
      EXPECT_LE(std::abs(R(z) - p), 1e-8 * std::abs(p) + 1e-14) << s << " " << z;
    }
  }
}

TEST(Superstep, Stork2ExactAmplificationMatchesStabilityPolynomial) {
  for (int s : {2, 4, 17, 100}) {
    const Rkg2Coefficients k = rkg2_coeffs(s);
    const Amplification R(Method::stork2, s);
    for (int i = 0; i <= 50; ++i) {
      const double z = -0.6 * (s * s + 3 * s - 4) * i / 50.0;
      const double p = rkg2_stability_poly(k, z);
      EXPECT_NEAR(R(z).real(), p, 1e-9 * std::max(1.0, std::abs(p))) << s << " " << z;
    }
  }
}

TEST(SolveFlow, TaylorModeEvaluationCount) {
  const AnalyticProblem p = time_reversed(make_gaussian_flow(Vector::Ones(2), 0.5), 0, 1);
  const TimeGrid g = TimeGrid::uniform(20, 0, 1);
  for (Method m : {Method::stork2, Method::stork4})
    for (int n : {2, 3}) {
      Counted c(p.field);
      const SolveReport r = solve_flow(Batch<>::Ones(2, 4), g, c.field, stork_cfg(m, 9, n));
      EXPECT_EQ(r.nfe, 21);
      EXPECT_EQ(*c.calls, 21);
      EXPECT_EQ(static_cast<int>(r.trajectory.size()), 21);
    }
}

TEST(SolveFlow, ExactModeEvaluationCount) {
  const TimeGrid g = TimeGrid::uniform(7, 0, 1);
  for (int s : {3, 12}) {
    Counted c(linear_field(-1));
    const SolveReport r = solve_flow(scalar(1), g, c.field, stork_cfg(Method::stork2, s, 2, SubstageMode::exact));
    EXPECT_EQ(r.nfe, 7 * s);
    EXPECT_EQ(*c.calls, 7 * s);
  }
  for (Method m : {Method::euler, Method::heun, Method::rk4, Method::ab2}) {
    Counted c(linear_field(-1));
    const SolveReport r = solve_flow(scalar(1), g, c.field, stork_cfg(m, 1, 2));
    EXPECT_EQ(r.nfe, 7 * evaluations_per_step(m, 1, SubstageMode::taylor));
    EXPECT_EQ(*c.calls, r.nfe);
  }
}

TEST(SolveFlow, ErrorsBeforeAnyEvaluation) {
  const TimeGrid g = TimeGrid::uniform(10, 0, 1);
  auto expect_rejected = [&](const Batch<>& x, const TimeGrid& grid, SolverConfig cfg) {
    Counted c(linear_field(-1));
    EXPECT_THROW(solve_flow(x, grid, c.field, cfg), ConfigError);
    EXPECT_EQ(*c.calls, 0);
  };
  expect_rejected(scalar(1), TimeGrid::uniform(3, 0, 1), stork_cfg(Method::stork4, 9, 3));
  expect_rejected(scalar(1), g, stork_cfg(Method::stork2, 1, 2));
  expect_rejected(scalar(1), g, stork_cfg(Method::stork2, 1001, 2, SubstageMode::exact));
  expect_rejected(scalar(1), g, stork_cfg(Method::stork4, 4, 2));
  SolverConfig strict = stork_cfg(Method::stork4, 41, 2);
  strict.strict_degree = true;
  expect_rejected(scalar(1), g, strict);
  expect_rejected(scalar(1), g, stork_cfg(Method::stork4, 9, 4));
  expect_rejected(scalar(1), g, stork_cfg(Method::stork4_noise, 9, 2));
  expect_rejected(Batch<>::Ones(2, 1), g, stork_cfg(Method::stork4, 9, 2));
  expect_rejected(Batch<>(), g, stork_cfg(Method::euler, 1, 2));
  EXPECT_THROW(parse_method("stork1"), ConfigError);
  EXPECT_THROW(parse_method("rk45"), ConfigError);
  EXPECT_THROW(parse_substage_mode("implicit"), ConfigError);
}

TEST(SolveFlow, RoundedUpDegreeIsReported) {
  const TimeGrid g = TimeGrid::uniform(10, 0, 1);
  const SolveReport r = solve_flow(scalar(1), g, linear_field(-1), stork_cfg(Method::stork4, 41, 2));
  EXPECT_EQ(r.substeps_requested, 41);
  EXPECT_EQ(r.substeps_used, 42);
  const SolveReport e =
      solve_flow(scalar(1), g, linear_field(-1), stork_cfg(Method::stork4, 41, 2, SubstageMode::exact));
  EXPECT_EQ(e.substeps_used, 42);
  EXPECT_EQ(e.nfe, 10 * 42);
}

TEST(SolveFlow, DeterministicAcrossRuns) {
  Matrix A(2, 2);
  A << -1, 3, -3, -1;
  const AnalyticProblem p = time_reversed(make_linear_system(A), 0, 1);
  const TimeGrid g = TimeGrid::flow_shift(25, 3.0, 0, 1);
  Batch<> x(2, 3);
  x << 1, 0, -1, 0.5, 2, 0.1;
  for (const auto& cfg : {stork_cfg(Method::stork4, 9, 3), stork_cfg(Method::stork2, 7, 2),
                          stork_cfg(Method::stork4, 12, 2, SubstageMode::exact)}) {
    const SolveReport a = solve_flow(x, g, p.field, cfg), b = solve_flow(x, g, p.field, cfg);
    ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) EXPECT_TRUE(bitwise_equal(a.trajectory[i], b.trajectory[i]));
    EXPECT_TRUE(bitwise_equal(a.final_state, b.final_state));
  }
}

TEST(SolveFlow, BatchColumnsAreIndependent) {
  const AnalyticProblem p = time_reversed(make_gaussian_flow(Vector::Ones(2), 0.5), 0, 1);
  const TimeGrid g = TimeGrid::uniform(15, 0, 1);
  Batch<> x(2, 3);
  x << 1, 0, -1, 0.5, 2, 0.1;
  const SolveReport all = solve_flow(x, g, p.field, stork_cfg(Method::stork4, 9, 3));
  for (int j = 0; j < 3; ++j) {
    const SolveReport one = solve_flow(Batch<>(x.col(j)), g, p.field, stork_cfg(Method::stork4, 9, 3));
    EXPECT_LT((one.final_state - all.final_state.col(j)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(SolveFlow, ExactStork4IsAccurateOnRotation) {
  Matrix A(2, 2);
  A << 0, -1, 1, 0;
  const AnalyticProblem p = time_reversed(make_linear_system(A), 0, 1);
  Batch<> x(2, 1);
  x << 1, 0;
  const SolveReport r = solve_flow(x, TimeGrid::uniform(20, 0, 1), p.field, stork_cfg(Method::stork4, 9, 3, SubstageMode::exact));
  EXPECT_LT((r.final_state - p.oracle(x, 1, 0)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveFlow, GuidedFieldMatchesManualCombination) {
  Vector mu(2);
  mu << 2, -1;
  const auto cond = make_gaussian_flow(mu, 0.4), uncond = make_gaussian_flow(Vector::Zero(2), 1.0);
  const auto guided = guided_field(GuidedField<VelocityField<>>{cond.field, uncond.field, 4.5});
  VelocityField<> manual;
  manual.dim = 2;
  manual.eval = [&](const Batch<>& x, double t) -> Batch<> {
    return 4.5 * cond.field(x, t) + (1 - 4.5) * uncond.field(x, t);
  };
  auto reverse = [](VelocityField<> f) {
    VelocityField<> r;
    r.dim = f.dim;
    r.eval = [f](const Batch<>& x, double s) -> Batch<> { return -f(x, 1 - s); };
    return r;
  };
  const TimeGrid g = TimeGrid::uniform(12, 0, 1);
  const SolveReport a = solve_flow(Batch<>::Ones(2, 2), g, reverse(guided), stork_cfg(Method::stork4, 9, 3));
  const SolveReport b = solve_flow(Batch<>::Ones(2, 2), g, reverse(manual), stork_cfg(Method::stork4, 9, 3));
  EXPECT_TRUE(bitwise_equal(a.final_state, b.final_state));
}

TEST(SolveFlow, DiagnosticsCoverEveryStep) {
  const TimeGrid g = TimeGrid::uniform(9, 0, 1);
  const SolveReport r = solve_flow(scalar(1), g, linear_field(-1), stork_cfg(Method::stork2, 5, 3));
  ASSERT_EQ(static_cast<int>(r.per_step.size()), 9);
  for (int k = 0; k < 9; ++k) EXPECT_EQ(r.per_step[k].index, 9 - k);
  for (const auto& d : r.per_step) EXPECT_GT(d.max_stage_magnitude, 0);
  EXPECT_EQ(r.method, "stork2");
  EXPECT_EQ(r.substage_mode, "taylor");
}
