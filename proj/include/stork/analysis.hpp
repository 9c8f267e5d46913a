#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stork/parallel.hpp"
#include "stork/solve.hpp"

namespace stork {

/// Amplification R(z) of one exact-mode step: the stepper itself applied to
/// v = -z x with h = 1 on a complex scalar state. Coefficients are built once.
class Amplification {
 public:
  Amplification(Method m, int substeps, bool literal_finishing = false) : method_(m), literal_(literal_finishing) {
    switch (m) {
      case Method::euler:
      case Method::heun:
      case Method::rk4: break;
      case Method::stork2: rkg2_ = rkg2_coeffs(substeps); break;
      case Method::stork4:
      case Method::stork4_noise: rock4_ = rock4_coeffs(substeps); break;
      case Method::ab2: throw ConfigError("amplification: ab2 is a multistep method without a one-step factor");
    }
  }

  std::complex<double> operator()(std::complex<double> z) const {
    using C = std::complex<double>;
    VelocityField<C> v;
    v.dim = 1;
    v.eval = [z](const Batch<C>& x, double) -> Batch<C> { return -z * x; };
    Batch<C> y0 = Batch<C>::Ones(1, 1);
    Batch<C> y1;
    if (rkg2_) {
      y1 = stork2_superstep<C>(y0, 1.0, 1.0, *rkg2_, nullptr, v, SubstageMode::exact);
    } else if (rock4_) {
      y1 = stork4_superstep<C>(y0, 1.0, 1.0, *rock4_, nullptr, v, SubstageMode::exact, nullptr, nullptr, literal_);
    } else {
      y1 = baseline_step<C>(method_, y0, 1.0, 1.0, v);
    }
    return y1(0, 0);
  }

  int substeps_used() const { return rkg2_ ? rkg2_->substeps : rock4_ ? rock4_->substeps : 1; }

 private:
  Method method_;
  bool literal_;
  std::optional<Rkg2Coefficients> rkg2_;
  std::optional<Rock4Coefficients> rock4_;
};

inline std::complex<double> amplification_factor(Method m, int substeps, std::complex<double> z) {
  return Amplification(m, substeps)(z);
}

/// |R(z)| at or below this counts as stable; absorbs rounding at true boundaries.
inline constexpr double kStabilityTolerance = 1e-8;

struct StabilityBounds {
  double re_min = -3, re_max = 1, im_min = -2, im_max = 2;
};

struct StabilityScan {
  std::string method;
  int substeps = 0;
  StabilityBounds bounds;
  int nx = 0, ny = 0;
  /// magnitudes[iy * nx + ix] = |R(re_ix + i im_iy)| on grid points including the bounds.
  std::vector<double> magnitudes;
  long inside_count = 0;

  double re(int ix) const { return bounds.re_min + (bounds.re_max - bounds.re_min) * ix / (nx - 1); }
  double im(int iy) const { return bounds.im_min + (bounds.im_max - bounds.im_min) * iy / (ny - 1); }
  double cell_area() const {
    return (bounds.re_max - bounds.re_min) / (nx - 1) * (bounds.im_max - bounds.im_min) / (ny - 1);
  }
  double inside_area() const { return inside_count * cell_area(); }
};

inline StabilityScan stability_region_scan(Method m, int substeps, const StabilityBounds& b, int nx, int ny,
                                           int workers = 0) {
  if (nx < 2 || ny < 2) throw ConfigError("stability scan: resolution must be >= 2 per axis");
  if (!(b.re_max > b.re_min) || !(b.im_max > b.im_min)) throw ConfigError("stability scan: empty bounds");
  const Amplification R(m, substeps);
  StabilityScan scan;
  scan.method = to_string(m);
  scan.substeps = R.substeps_used();
  scan.bounds = b;
  scan.nx = nx;
  scan.ny = ny;
  scan.magnitudes.assign(static_cast<std::size_t>(nx) * ny, 0.0);
  parallel_for(
      ny,
      [&](int iy) {
        for (int ix = 0; ix < nx; ++ix)
          scan.magnitudes[static_cast<std::size_t>(iy) * nx + ix] = std::abs(R({scan.re(ix), scan.im(iy)}));
      },
      workers);
  for (double v : scan.magnitudes)
    if (v <= 1 + kStabilityTolerance) ++scan.inside_count;
  return scan;
}

/// Largest l such that |R| <= 1 + 1e-8 at 200 interior samples of (-l, 0) and
/// at -l, located by bisection to 1e-3.
inline double real_stability_extent(Method m, int substeps) {
  const Amplification R(m, substeps);
  auto ok = [&](double l) {
    for (int i = 1; i <= 201; ++i)
      if (std::abs(R(-l * i / 201.0)) > 1 + kStabilityTolerance) return false;
    return true;
  };
  double lo = 0, hi = 1;
  while (ok(hi)) {
    lo = hi;
    hi *= 2;
    if (hi > 1e8) return lo;
  }
  while (hi - lo > 1e-3) {
    const double mid = (lo + hi) / 2;
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

struct ConvergenceReport {
  std::vector<int> steps;
  std::vector<double> h;
  std::vector<double> errors;  ///< NaN marks an unstable (non-finite) run
  double fitted_order = 0;
  double r_squared = 0;
  bool flagged = false;  ///< r^2 below 0.98 or too few usable points
  std::vector<std::string> notes;
};

/// Least-squares slope of log(error) against log(h); non-positive or
/// non-finite errors are left out with a note.
inline void fit_order(ConvergenceReport& r) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < r.errors.size(); ++i) {
    const double e = r.errors[i];
    if (!std::isfinite(e)) {
      r.notes.push_back("M=" + std::to_string(r.steps[i]) + " unstable, excluded");
    } else if (e <= 0) {
      r.notes.push_back("M=" + std::to_string(r.steps[i]) + " exact hit, excluded");
    } else {
      xs.push_back(std::log(r.h[i]));
      ys.push_back(std::log(e));
    }
  }
  const std::size_t n = xs.size();
  if (n < 2) {
    r.flagged = true;
    r.fitted_order = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  r.fitted_order = sxy / sxx;
  r.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  r.flagged = r.r_squared < 0.98 || n < 3;
}

namespace detail {

inline void check_step_counts(const std::vector<int>& Ms) {
  if (Ms.size() < 4) throw ConfigError("empirical order: need at least 4 step counts");
  const auto [mn, mx] = std::minmax_element(Ms.begin(), Ms.end());
  if (*mn < 1 || *mx < 8 * *mn) throw ConfigError("empirical order: step counts must span at least 8x");
}

inline double max_norm_error(const Batch<>& a, const Batch<>& b) {
  if (!a.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  return (a - b).cwiseAbs().maxCoeff();
}

// Solves a problem already in the solver convention on a uniform grid.
inline SolveReport solve_problem(const AnalyticProblem& p, const Batch<>& x0, int M, double t_lo, double t_hi,
                                 const SolverConfig& cfg) {
  if (p.kind == AnalyticProblem::Kind::noise && (cfg.method == Method::stork4_noise))
    return solve_noise(x0, TimeGrid::noise(M, t_lo, t_hi), p.noise, cfg);
  return solve_flow(x0, TimeGrid::uniform(M, t_lo, t_hi), p.field, cfg);
}

}  // namespace detail

/// Endpoint max-norm error against the oracle for each M, and the fitted order.
/// The problem must follow the solver convention (start at t_hi, end at t_lo).
inline ConvergenceReport empirical_order(const AnalyticProblem& p, SolverConfig cfg, const std::vector<int>& Ms,
                                         const Batch<>& x0, double t_lo, double t_hi) {
  detail::check_step_counts(Ms);
  cfg.tweedie = false;
  const Batch<> truth = p.oracle(x0, t_hi, t_lo);
  ConvergenceReport r;
  for (int M : Ms) {
    const SolveReport s = detail::solve_problem(p, x0, M, t_lo, t_hi, cfg);
    r.steps.push_back(M);
    r.h.push_back((t_hi - t_lo) / M);
    r.errors.push_back(detail::max_norm_error(s.final_state, truth));
  }
  fit_order(r);
  return r;
}

/// Largest distance over grid points between taylor-mode and exact-mode
/// trajectories of the same STORK method, for each M, and its fitted order.
inline ConvergenceReport taylor_gap_order(const AnalyticProblem& p, SolverConfig cfg, const std::vector<int>& Ms,
                                          const Batch<>& x0, double t_lo, double t_hi) {
  detail::check_step_counts(Ms);
  cfg.tweedie = false;
  cfg.record_trajectory = true;
  SolverConfig taylor = cfg, exact = cfg;
  taylor.substage_mode = SubstageMode::taylor;
  exact.substage_mode = SubstageMode::exact;
  ConvergenceReport r;
  for (int M : Ms) {
    const SolveReport a = detail::solve_problem(p, x0, M, t_lo, t_hi, taylor);
    const SolveReport b = detail::solve_problem(p, x0, M, t_lo, t_hi, exact);
    double gap = 0;
    for (int i = 0; i <= M; ++i) {
      const double d = detail::max_norm_error(a.trajectory[i], b.trajectory[i]);
      gap = std::isfinite(d) && std::isfinite(gap) ? std::max(gap, d) : std::numeric_limits<double>::quiet_NaN();
    }
    r.steps.push_back(M);
    r.h.push_back((t_hi - t_lo) / M);
    r.errors.push_back(gap);
  }
  fit_order(r);
  return r;
}

struct StiffnessDemo {
  static constexpr double lambda = -20.0;
  static constexpr int steps = 10;
  /// Rows t, exact, euler, heun, rkg2_s4 for t = 0, 0.1, ..., 1.
  std::vector<std::array<double, 5>> rows;
  double max_error_euler = 0, max_error_heun = 0, max_error_rkg2 = 0;
};

/// dx/dt = -20 x, x(0) = 1 on [0, 1] with ten uniform steps of Euler, Heun and
/// exact-mode RKG2 with four stages.
inline StiffnessDemo stiffness_demo() {
  StiffnessDemo demo;
  const AnalyticProblem p = time_reversed(make_stiff_scalar(StiffnessDemo::lambda), 0.0, 1.0);
  const TimeGrid grid = TimeGrid::uniform(StiffnessDemo::steps, 0.0, 1.0);
  const Batch<> x0 = Batch<>::Ones(1, 1);
  auto run = [&](Method m) {
    SolverConfig cfg;
    cfg.method = m;
    cfg.substeps = 4;
    cfg.substage_mode = SubstageMode::exact;
    return solve_flow(x0, grid, p.field, cfg);
  };
  const SolveReport euler = run(Method::euler), heun = run(Method::heun), rkg2 = run(Method::stork2);
  for (int n = 0; n <= StiffnessDemo::steps; ++n) {
    const int i = StiffnessDemo::steps - n;  // grid index in the solver convention
    const double t = static_cast<double>(n) / StiffnessDemo::steps;
    const double exact = std::exp(StiffnessDemo::lambda * t);
    const std::array<double, 5> row{t, exact, euler.trajectory[i](0, 0), heun.trajectory[i](0, 0),
                                    rkg2.trajectory[i](0, 0)};
    demo.max_error_euler = std::max(demo.max_error_euler, std::abs(row[2] - exact));
    demo.max_error_heun = std::max(demo.max_error_heun, std::abs(row[3] - exact));
    demo.max_error_rkg2 = std::max(demo.max_error_rkg2, std::abs(row[4] - exact));
    demo.rows.push_back(row);
  }
  return demo;
}

}  // namespace stork
