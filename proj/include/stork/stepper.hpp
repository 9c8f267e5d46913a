#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stork/coefficients.hpp"
#include "stork/core.hpp"
#include "stork/derivatives.hpp"
#include "stork/fields.hpp"
#include "stork/time_grid.hpp"

namespace stork {

/// Solver families. A first-order STORK variant is intentionally absent.
enum class Method { euler, heun, rk4, ab2, stork2, stork4, stork4_noise };

/// How stage values inside a super-step are obtained: Taylor extrapolation
/// from cached real evaluations, or a real evaluation per stage.
enum class SubstageMode { taylor, exact };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::euler: return "euler";
    case Method::heun: return "heun";
    case Method::rk4: return "rk4";
    case Method::ab2: return "ab2";
    case Method::stork2: return "stork2";
    case Method::stork4: return "stork4";
    case Method::stork4_noise: return "stork4_noise";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::euler, Method::heun, Method::rk4, Method::ab2, Method::stork2, Method::stork4,
                   Method::stork4_noise})
    if (to_string(m) == s) return m;
  if (s == "stork1") throw ConfigError("unknown method 'stork1' (first-order STORK is not provided)");
  throw ConfigError("unknown method '" + s + "'");
}

inline std::string to_string(SubstageMode m) { return m == SubstageMode::taylor ? "taylor" : "exact"; }

inline SubstageMode parse_substage_mode(const std::string& s) {
  if (s == "taylor") return SubstageMode::taylor;
  if (s == "exact") return SubstageMode::exact;
  throw ConfigError("unknown substage mode '" + s + "'");
}

inline bool is_stork(Method m) { return m == Method::stork2 || m == Method::stork4 || m == Method::stork4_noise; }

/// Real field evaluations per super-step of a fixed-cost method.
inline int evaluations_per_step(Method m, int substeps, SubstageMode mode) {
  switch (m) {
    case Method::euler:
    case Method::ab2: return 1;
    case Method::heun: return 2;
    case Method::rk4: return 4;
    default: return mode == SubstageMode::exact ? substeps : 1;
  }
}

struct SolverConfig {
  Method method = Method::stork4;
  int substeps = 9;
  /// 3 for unconditional and noise use, 2 for guided flow use.
  int taylor_order = 3;
  SubstageMode substage_mode = SubstageMode::taylor;
  bool strict_degree = false;
  /// Single-chain finishing Y_j = Y_{s-4} - h mu_j v(Y_{j-1}) instead of the tableau.
  bool literal_finishing = false;
  /// Apply the Tweedie map after a noise solve.
  bool tweedie = true;
  bool record_trajectory = true;
};

struct StepDiagnostics {
  int index = 0;  ///< super-step from t_index to t_{index-1}
  double max_stage_magnitude = 0;
};

struct SolveReport {
  /// trajectory[i] is the state at grid point i; empty unless recorded.
  std::vector<Batch<>> trajectory;
  int nfe = 0;
  std::vector<StepDiagnostics> per_step;
  Batch<> final_state;
  int substeps_requested = 0;
  int substeps_used = 0;  ///< differs from requested when a ROCK4 degree was rounded up
  std::string method;
  std::string substage_mode;
};

namespace detail {

template <class Scalar>
double max_abs(const Batch<Scalar>& x) {
  return x.size() == 0 ? 0.0 : static_cast<double>(x.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Working memory of a two-step Adams-Bashforth baseline.
template <class Scalar = double>
struct BaselineMemory {
  bool has_previous = false;
  double h_previous = 0;
  Batch<Scalar> v_previous;
};

/// One step x <- x - h v of a textbook baseline from time t to t - h.
/// ab2 falls back to Euler until `memory` holds a previous evaluation.
template <class Scalar>
Batch<Scalar> baseline_step(Method m, const Batch<Scalar>& x, double t, double h, const VelocityField<Scalar>& v,
                            int* nfe = nullptr, BaselineMemory<Scalar>* memory = nullptr) {
  auto count = [&](int k) {
    if (nfe) *nfe += k;
  };
  const Scalar hs(h);
  switch (m) {
    case Method::euler: {
      count(1);
      return x - hs * v(x, t);
    }
    case Method::heun: {
      count(2);
      const Batch<Scalar> k1 = v(x, t);
      const Batch<Scalar> k2 = v(x - hs * k1, t - h);
      return x - (hs / Scalar(2)) * (k1 + k2);
    }
    case Method::rk4: {
      count(4);
      const Batch<Scalar> k1 = v(x, t);
      const Batch<Scalar> k2 = v(x - (hs / Scalar(2)) * k1, t - h / 2);
      const Batch<Scalar> k3 = v(x - (hs / Scalar(2)) * k2, t - h / 2);
      const Batch<Scalar> k4 = v(x - hs * k3, t - h);
      return x - (hs / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    }
    case Method::ab2: {
      if (!memory) throw ConfigError("ab2 requires baseline memory");
      count(1);
      Batch<Scalar> cur = v(x, t);
      Batch<Scalar> next;
      if (!memory->has_previous) {
        next = x - hs * cur;
      } else {
        const double r = h / (2 * memory->h_previous);
        next = x - hs * (Scalar(1 + r) * cur - Scalar(r) * memory->v_previous);
      }
      memory->has_previous = true;
      memory->h_previous = h;
      memory->v_previous = std::move(cur);
      return next;
    }
    default: throw ConfigError("baseline_step: " + to_string(m) + " is not a baseline method");
  }
}

/// RKG2 super-step of size h from y0 given v0 = v(y0, t0).
/// stage(j, Y_j) must return the field value at stage j (time t0 - h c_j).
/// Written in difference form so a zero field leaves y0 bitwise unchanged.
template <class Scalar, class StageFn>
Batch<Scalar> rkg2_stages(const Batch<Scalar>& y0, double h, const Rkg2Coefficients& k, const Batch<Scalar>& v0,
                          StageFn&& stage, double* max_stage = nullptr) {
  const int s = k.substeps;
  const Batch<Scalar> hv0 = Scalar(h) * v0;
  Batch<Scalar> older = y0;
  Batch<Scalar> old = y0 - Scalar(k.mu_tilde[1]) * hv0;
  double worst = detail::max_abs(old);
  for (int j = 2; j <= s; ++j) {
    const Batch<Scalar> vj = stage(j - 1, old);
    Batch<Scalar> next = y0 + Scalar(k.mu[j]) * (old - y0) + Scalar(k.nu[j]) * (older - y0) -
                         Scalar(k.mu_tilde[j] * h) * vj - Scalar(k.gamma_tilde[j]) * hv0;
    older = std::move(old);
    old = std::move(next);
    worst = std::max(worst, detail::max_abs(old));
  }
  if (max_stage) *max_stage = worst;
  return old;
}

/// ROCK4 super-step; same contract as rkg2_stages.
template <class Scalar, class StageFn>
Batch<Scalar> rock4_stages(const Batch<Scalar>& y0, double h, const Rock4Coefficients& k, const Batch<Scalar>& v0,
                           StageFn&& stage, bool literal = false, double* max_stage = nullptr) {
  const int n = k.recurrence_stages();
  Batch<Scalar> older = y0;
  Batch<Scalar> old = y0 - Scalar(h * k.mu[1]) * v0;
  double worst = detail::max_abs(old);
  for (int j = 2; j <= n; ++j) {
    const Batch<Scalar> vj = stage(j - 1, old);
    Batch<Scalar> next = old + Scalar(k.kappa[j]) * (old - older) - Scalar(h * k.mu[j]) * vj;
    older = std::move(old);
    old = std::move(next);
    worst = std::max(worst, detail::max_abs(old));
  }
  const Batch<Scalar> base = std::move(old);
  Batch<Scalar> out;
  if (literal) {
    Batch<Scalar> cur = base;
    for (int q = 0; q < 4; ++q) {
      const Batch<Scalar> vq = stage(n + q, cur);
      cur = base - Scalar(h * k.literal_mu[q]) * vq;
      worst = std::max(worst, detail::max_abs(cur));
    }
    out = std::move(cur);
  } else {
    const auto& a = k.a;
    const auto& b = k.b;
    const Batch<Scalar> k1 = stage(n, base);
    const Batch<Scalar> s2 = base - Scalar(h * a[0]) * k1;
    const Batch<Scalar> k2 = stage(n + 1, s2);
    const Batch<Scalar> s3 = base - Scalar(h) * (Scalar(a[1]) * k1 + Scalar(a[2]) * k2);
    const Batch<Scalar> k3 = stage(n + 2, s3);
    const Batch<Scalar> s4 = base - Scalar(h) * (Scalar(a[3]) * k1 + Scalar(a[4]) * k2 + Scalar(a[5]) * k3);
    const Batch<Scalar> k4 = stage(n + 3, s4);
    out = base - Scalar(h) * (Scalar(b[0]) * k1 + Scalar(b[1]) * k2 + Scalar(b[2]) * k3 + Scalar(b[3]) * k4);
    for (const Batch<Scalar>* st : {&s2, &s3, &s4, static_cast<const Batch<Scalar>*>(&out)})
      worst = std::max(worst, detail::max_abs(*st));
  }
  if (max_stage) *max_stage = worst;
  return out;
}

// Start-up formulas; shared by startup_flow and the host-driven scheduler.
namespace startup {

/// Half-step Euler: x_{M-1/2} = x_M - h_M/2 v_M.
template <class Scalar>
Batch<Scalar> half_step(const Batch<Scalar>& xM, double hM, const Batch<Scalar>& vM) {
  return xM - Scalar(0.5 * hM) * vM;
}

/// x_{M-1} = x_{M-1/2} - 3/4 h_M v_{M-1/2} + 1/4 h_M v_M.
template <class Scalar>
Batch<Scalar> second_half(const Batch<Scalar>& xhalf, double hM, const Batch<Scalar>& vhalf,
                          const Batch<Scalar>& vM) {
  return xhalf - Scalar(0.75 * hM) * vhalf + Scalar(0.25 * hM) * vM;
}

/// Variable-step Adams-Bashforth: x - (h^2/(2 h_prev) + h) v + h^2/(2 h_prev) v_prev.
template <class Scalar>
Batch<Scalar> adams_bashforth(const Batch<Scalar>& x, double h, double h_prev, const Batch<Scalar>& v,
                              const Batch<Scalar>& v_prev) {
  const double r = h * h / (2 * h_prev);
  return x - Scalar(r + h) * v + Scalar(r) * v_prev;
}

}  // namespace startup

template <class Scalar = double>
struct StartupResult {
  Batch<Scalar> state;  ///< state at grid index M - n
  DerivativeCache<Scalar> cache;
  int nfe_used = 0;
  std::vector<Batch<Scalar>> states;  ///< states at M, M-1, ..., M-n
};

/// Start-up phase: half-step Euler, an Adams-Bashforth step to t_{M-1}, then
/// n - 1 variable-step Adams-Bashforth steps. Uses n + 1 evaluations.
template <class Scalar>
StartupResult<Scalar> startup_flow(const Batch<Scalar>& x_init, const TimeGrid& grid, const VelocityField<Scalar>& v,
                                   int taylor_order) {
  grid.validate();
  const int M = grid.M(), n = taylor_order;
  if (n != 2 && n != 3) throw ConfigError("taylor order must be 2 or 3");
  if (M < n + 1) throw ConfigError("start-up needs at least n + 1 = " + std::to_string(n + 1) + " steps, got " +
                                   std::to_string(M));
  StartupResult<Scalar> r{x_init, DerivativeCache<Scalar>(n), 0, {x_init}};
  const double hM = grid.h(M), tM = grid.t(M);
  Batch<Scalar> vM = v(x_init, tM);
  r.cache.push(tM, vM);
  const Batch<Scalar> xhalf = startup::half_step(x_init, hM, vM);
  Batch<Scalar> vhalf = v(xhalf, tM - 0.5 * hM);
  r.cache.push(tM - 0.5 * hM, vhalf);
  Batch<Scalar> x = startup::second_half(xhalf, hM, vhalf, vM);
  r.states.push_back(x);
  Batch<Scalar> v_prev = std::move(vM);
  for (int i = M - 1; i > M - n; --i) {
    Batch<Scalar> vi = v(x, grid.t(i));
    r.cache.push(grid.t(i), vi);
    x = startup::adams_bashforth(x, grid.h(i), grid.h(i + 1), vi, v_prev);
    r.states.push_back(x);
    v_prev = std::move(vi);
  }
  r.nfe_used = n + 1;
  r.state = std::move(x);
  return r;
}

/// Stage evaluator for taylor mode: v at stage j is the cached expansion at
/// dt = -h c_j.
template <class Scalar>
struct TaylorStages {
  const DerivativeCache<Scalar>* cache;
  const std::vector<double>* c;
  double h;
  int order;
  Batch<Scalar> operator()(int j, const Batch<Scalar>&) const { return taylor_eval(*cache, order, -h * (*c)[j]); }
};

/// Stage evaluator for exact mode: a real evaluation at (Y_j, t0 - h c_j).
template <class Scalar>
struct ExactStages {
  const VelocityField<Scalar>* field;
  const std::vector<double>* c;
  double t0;
  double h;
  int* nfe;
  Batch<Scalar> operator()(int j, const Batch<Scalar>& y) const {
    if (nfe) ++*nfe;
    return (*field)(y, t0 - h * (*c)[j]);
  }
};

/// One STORK-2 super-step from (y0, t0) to t0 - h. Evaluates v(y0, t0) once;
/// in taylor mode that value is pushed into `cache`, which is then refreshed
/// and supplies every other stage value.
template <class Scalar>
Batch<Scalar> stork2_superstep(const Batch<Scalar>& y0, double t0, double h, const Rkg2Coefficients& k,
                               DerivativeCache<Scalar>* cache, const VelocityField<Scalar>& v, SubstageMode mode,
                               int* nfe = nullptr, double* max_stage = nullptr) {
  const Batch<Scalar> v0 = v(y0, t0);
  if (nfe) ++*nfe;
  if (mode == SubstageMode::exact)
    return rkg2_stages(y0, h, k, v0, ExactStages<Scalar>{&v, &k.c, t0, h, nfe}, max_stage);
  if (!cache) throw ConfigError("taylor mode requires a derivative cache");
  cache->push(t0, v0);
  cache->refresh();
  return rkg2_stages(y0, h, k, v0, TaylorStages<Scalar>{cache, &k.c, h, cache->order()}, max_stage);
}

/// One STORK-4 super-step; same contract as stork2_superstep.
template <class Scalar>
Batch<Scalar> stork4_superstep(const Batch<Scalar>& y0, double t0, double h, const Rock4Coefficients& k,
                               DerivativeCache<Scalar>* cache, const VelocityField<Scalar>& v, SubstageMode mode,
                               int* nfe = nullptr, double* max_stage = nullptr, bool literal = false) {
  const Batch<Scalar> v0 = v(y0, t0);
  if (nfe) ++*nfe;
  const std::vector<double>& c = literal ? k.c_literal : k.c;
  if (mode == SubstageMode::exact)
    return rock4_stages(y0, h, k, v0, ExactStages<Scalar>{&v, &c, t0, h, nfe}, literal, max_stage);
  if (!cache) throw ConfigError("taylor mode requires a derivative cache");
  cache->push(t0, v0);
  cache->refresh();
  return rock4_stages(y0, h, k, v0, TaylorStages<Scalar>{cache, &c, h, cache->order()}, literal, max_stage);
}

}  // namespace stork
