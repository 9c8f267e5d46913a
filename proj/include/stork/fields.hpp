#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include <unsupported/Eigen/MatrixFunctions>

#include "stork/core.hpp"

namespace stork {

/// Right-hand side v(x, t) of dx/dt = v. Columns of x are independent states.
template <class Scalar = double>
struct VelocityField {
  using State = Batch<Scalar>;
  int dim = 0;
  std::function<State(const State&, double)> eval;
  std::string name;

  State operator()(const State& x, double t) const { return eval(x, t); }
};

/// Noise-prediction model for dx/dt = f(t) x + g(t)^2 / (2 sigma(t)) eps(x, t).
struct SemiLinearNoiseModel {
  int dim = 0;
  std::function<double(double)> f, g, sigma, alpha_bar;
  std::function<Batch<>(const Batch<>&, double)> eps;
  std::string name;
  /// g^2 / (2 sigma) in closed form; derived from g and sigma when empty.
  /// Stage times of the last super-step may fall slightly below the floor.
  std::function<double(double)> eps_weight;

  double weight(double t) const {
    if (eps_weight) return eps_weight(t);
    const double gt = g(t);
    return gt * gt / (2.0 * sigma(t));
  }

  /// F(eps, x, t): the right-hand side assembled from a given noise value.
  Batch<> assemble(const Batch<>& eps_value, const Batch<>& x, double t) const {
    return f(t) * x + weight(t) * eps_value;
  }

  Batch<> rhs(const Batch<>& x, double t) const { return assemble(eps(x, t), x, t); }
};

/// Classifier-free guidance over two fields of the same kind.
template <class Field>
struct GuidedField {
  Field cond;
  Field uncond;
  double guidance_scale = 1.0;
};

/// guidance_scale * cond + (1 - guidance_scale) * uncond.
template <class Scalar>
Batch<Scalar> cfg_combine(const GuidedField<VelocityField<Scalar>>& g, const Batch<Scalar>& x, double t) {
  if (g.cond.dim != g.uncond.dim) throw ConfigError("cfg_combine: cond and uncond dimensions differ");
  const Scalar w(g.guidance_scale);
  return w * g.cond(x, t) + (Scalar(1) - w) * g.uncond(x, t);
}

inline Batch<> cfg_combine(const GuidedField<SemiLinearNoiseModel>& g, const Batch<>& x, double t) {
  if (g.cond.dim != g.uncond.dim) throw ConfigError("cfg_combine: cond and uncond dimensions differ");
  const double w = g.guidance_scale;
  return w * g.cond.eps(x, t) + (1.0 - w) * g.uncond.eps(x, t);
}

/// Guided velocity field; each evaluation calls both branches once.
template <class Scalar>
VelocityField<Scalar> guided_field(GuidedField<VelocityField<Scalar>> g) {
  if (g.cond.dim != g.uncond.dim) throw ConfigError("guided_field: cond and uncond dimensions differ");
  if (!(g.guidance_scale >= 0)) throw ConfigError("guided_field: guidance_scale must be >= 0");
  VelocityField<Scalar> out;
  out.dim = g.cond.dim;
  out.name = "cfg(" + g.cond.name + "," + g.uncond.name + ")";
  out.eval = [g = std::move(g)](const Batch<Scalar>& x, double t) { return cfg_combine(g, x, t); };
  return out;
}

/// Guided noise model. The schedule (f, g, sigma, alpha_bar) is taken from cond.
inline SemiLinearNoiseModel guided_field(GuidedField<SemiLinearNoiseModel> g) {
  if (g.cond.dim != g.uncond.dim) throw ConfigError("guided_field: cond and uncond dimensions differ");
  if (!(g.guidance_scale >= 0)) throw ConfigError("guided_field: guidance_scale must be >= 0");
  SemiLinearNoiseModel out = g.cond;
  out.name = "cfg(" + g.cond.name + "," + g.uncond.name + ")";
  out.eps = [g = std::move(g)](const Batch<>& x, double t) { return cfg_combine(g, x, t); };
  return out;
}

/// The noise model's full right-hand side F as a velocity field.
inline VelocityField<> as_velocity_field(SemiLinearNoiseModel m) {
  VelocityField<> out;
  out.dim = m.dim;
  out.name = m.name;
  out.eval = [m = std::move(m)](const Batch<>& x, double t) { return m.rhs(x, t); };
  return out;
}

/// A field of either kind with an exact-solution oracle.
struct AnalyticProblem {
  enum class Kind { velocity, noise };
  Kind kind = Kind::velocity;
  VelocityField<> field;       ///< set for both kinds; for noise it is F
  SemiLinearNoiseModel noise;  ///< set for Kind::noise
  /// Exact state at t_final starting from x at t_init.
  std::function<Batch<>(const Batch<>&, double, double)> oracle;
  double stiffness_scale = 0;
  std::string name;

  int dim() const { return field.dim; }
};

/// Classical fourth-order Runge-Kutta over [t0, t1] in `steps` equal steps.
template <class Scalar>
Batch<Scalar> rk4_reference(const VelocityField<Scalar>& v, Batch<Scalar> x, double t0, double t1, int steps) {
  if (steps < 1) throw ConfigError("rk4_reference: steps must be >= 1");
  const double h = (t1 - t0) / steps;
  const Scalar hs(h);
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    const Batch<Scalar> k1 = v(x, t);
    const Batch<Scalar> k2 = v(x + (hs / Scalar(2)) * k1, t + h / 2);
    const Batch<Scalar> k3 = v(x + (hs / Scalar(2)) * k2, t + h / 2);
    const Batch<Scalar> k4 = v(x + hs * k3, t + h);
    x += (hs / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
  }
  return x;
}

/// dx/dt = lambda x.
inline AnalyticProblem make_stiff_scalar(double lambda) {
  AnalyticProblem p;
  p.name = "stiff-scalar";
  p.field.dim = 1;
  p.field.name = "stiff-scalar";
  p.field.eval = [lambda](const Batch<>& x, double) -> Batch<> { return lambda * x; };
  p.oracle = [lambda](const Batch<>& x, double t0, double t1) -> Batch<> { return std::exp(lambda * (t1 - t0)) * x; };
  p.stiffness_scale = std::abs(lambda);
  return p;
}

/// dx/dt = A x with a matrix-exponential oracle.
inline AnalyticProblem make_linear_system(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw ConfigError("linear system: matrix must be square and non-empty");
  AnalyticProblem p;
  p.name = "linear-system";
  p.field.dim = static_cast<int>(A.rows());
  p.field.name = "linear-system";
  p.field.eval = [A](const Batch<>& x, double) -> Batch<> { return A * x; };
  p.oracle = [A](const Batch<>& x, double t0, double t1) -> Batch<> {
    const Matrix E = (A * (t1 - t0)).exp();
    return E * x;
  };
  const Eigen::VectorXcd ev = A.eigenvalues();
  p.stiffness_scale = ev.cwiseAbs().maxCoeff();
  return p;
}

/// Variance-preserving schedule alpha = cos(pi t / 2), sigma = sin(pi t / 2).
struct VpSchedule {
  static double alpha(double t) { return std::cos(kPi * t / 2); }
  static double sigma(double t) { return std::sin(kPi * t / 2); }
  /// d log alpha / dt.
  static double f(double t) { return -(kPi / 2) * std::tan(kPi * t / 2); }
  /// g^2 = d sigma^2 / dt - 2 f sigma^2.
  static double g(double t) { return std::sqrt(kPi * std::tan(kPi * t / 2)); }
  /// g^2 / (2 sigma); finite through t = 0.
  static double eps_weight(double t) { return (kPi / 2) / std::cos(kPi * t / 2); }
};

/// Gaussian data N(mu0, s0^2 I) under the VP schedule with its optimal noise
/// predictor. The probability-flow map is affine, which gives the oracle.
inline AnalyticProblem make_gaussian_vp(const Vector& mu0, double s0) {
  if (!(s0 > 0)) throw ConfigError("gaussian_vp: s0 must be > 0");
  if (mu0.size() == 0) throw ConfigError("gaussian_vp: mu0 must be non-empty");
  const double v0 = s0 * s0;
  auto var = [v0](double t) {
    const double a = VpSchedule::alpha(t), s = VpSchedule::sigma(t);
    return a * a * v0 + s * s;
  };
  SemiLinearNoiseModel m;
  m.dim = static_cast<int>(mu0.size());
  m.name = "gaussian-vp";
  m.f = VpSchedule::f;
  m.g = VpSchedule::g;
  m.sigma = VpSchedule::sigma;
  m.alpha_bar = VpSchedule::alpha;
  m.eps_weight = VpSchedule::eps_weight;
  m.eps = [mu0, var](const Batch<>& x, double t) -> Batch<> {
    const double a = VpSchedule::alpha(t), s = VpSchedule::sigma(t);
    return (s / var(t)) * (x.colwise() - a * mu0);
  };
  AnalyticProblem p;
  p.kind = AnalyticProblem::Kind::noise;
  p.name = m.name;
  p.noise = m;
  p.field = as_velocity_field(m);
  p.oracle = [mu0, var](const Batch<>& x, double t0, double t1) -> Batch<> {
    const double a0 = VpSchedule::alpha(t0), a1 = VpSchedule::alpha(t1);
    const double r = std::sqrt(var(t1) / var(t0));
    return (r * (x.colwise() - a0 * mu0)).colwise() + a1 * mu0;
  };
  p.stiffness_scale = 0;
  return p;
}

/// Marginal velocity of x_t = (1 - t) z + t x1, z ~ N(0, I), x1 ~ N(mu1, s1^2 I):
/// v = mu1 + D'(t) / (2 D(t)) (x - t mu1), D = (1 - t)^2 + t^2 s1^2.
inline AnalyticProblem make_gaussian_flow(const Vector& mu1, double s1) {
  if (!(s1 > 0)) throw ConfigError("gaussian_flow: s1 must be > 0");
  if (mu1.size() == 0) throw ConfigError("gaussian_flow: mu1 must be non-empty");
  const double v1 = s1 * s1;
  auto var = [v1](double t) { return (1 - t) * (1 - t) + t * t * v1; };
  auto dvar = [v1](double t) { return -2 * (1 - t) + 2 * t * v1; };
  AnalyticProblem p;
  p.name = "gaussian-flow";
  p.field.dim = static_cast<int>(mu1.size());
  p.field.name = p.name;
  p.field.eval = [mu1, var, dvar](const Batch<>& x, double t) -> Batch<> {
    const double k = dvar(t) / (2 * var(t));
    return (k * (x.colwise() - t * mu1)).colwise() + mu1;
  };
  p.oracle = [mu1, var](const Batch<>& x, double t0, double t1) -> Batch<> {
    const double r = std::sqrt(var(t1) / var(t0));
    return (r * (x.colwise() - t0 * mu1)).colwise() + t1 * mu1;
  };
  p.stiffness_scale = 0;
  return p;
}

/// Runs a forward-in-time problem on [t_lo, t_hi] under the solver convention
/// (grid index M to 0, x <- x - h v): w(x, s) = -v(x, t_lo + t_hi - s).
inline AnalyticProblem time_reversed(const AnalyticProblem& p, double t_lo, double t_hi) {
  if (p.kind != AnalyticProblem::Kind::velocity)
    throw ConfigError("time_reversed: noise problems already follow the solver convention");
  AnalyticProblem r = p;
  const double sum = t_lo + t_hi;
  auto inner = p.field.eval;
  r.field.eval = [inner, sum](const Batch<>& x, double s) -> Batch<> { return -inner(x, sum - s); };
  r.field.name = p.field.name + "-reversed";
  auto oracle = p.oracle;
  r.oracle = [oracle, sum](const Batch<>& x, double s0, double s1) { return oracle(x, sum - s0, sum - s1); };
  return r;
}

/// The identically zero field.
template <class Scalar = double>
VelocityField<Scalar> zero_field(int dim) {
  VelocityField<Scalar> v;
  v.dim = dim;
  v.name = "zero";
  v.eval = [](const Batch<Scalar>& x, double) -> Batch<Scalar> { return Batch<Scalar>::Zero(x.rows(), x.cols()); };
  return v;
}

}  // namespace stork
