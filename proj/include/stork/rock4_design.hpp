#pragma once

// Construction of fourth-order orthogonal Runge-Kutta-Chebyshev methods.
//
// The stability polynomial of an s-stage method factors as
//
//   R_s(z) = w4(z) * P_{s-4}(z),
//
// where P_{s-4} belongs to the family of polynomials orthogonal on [-l, 0]
// with respect to w4(z)^2 / sqrt(1 - x^2), x = 1 + 2 z / l, normalized to
// P(0) = 1, and w4 is the degree-4 polynomial making R_s(z) = e^z + O(z^5).
// The pair (w4, P) is a fixed point; it is found by damped iteration. The
// interval scale l is pushed as far as |R_s| <= 1 on [-l, 0] allows.
//
// The three-term recurrence of P gives the first s-4 stages. The remaining
// four stages are an explicit Runge-Kutta finishing procedure started from
// Y_{s-4}. Its eight elementary weights follow from the composite order
// conditions (the eight rooted trees up to order four), which are linear in
// them. The tableau is then recovered with the two internal abscissae fixed
// at 1/4 and 1/2 of the finishing step and the last one found by root
// search.
//
// Everything here runs offline (tools/rock4_tablegen) and in tests that check
// the embedded table regenerates. The solvers read the embedded table only.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace stork::rock4_design {

using Real = long double;

struct DesignedMethod {
  int substeps = 0;
  Real scale = 0;                  // l: orthogonality interval is [-l, 0]
  std::vector<Real> mu;            // mu[1..n], mu[0] unused
  std::vector<Real> kappa;         // kappa[2..n], kappa[0..1] unused
  std::array<Real, 5> w4{};        // w4(z) = sum w4[k] z^k, w4[0] = 1
  std::array<Real, 6> a{};         // a21, a31, a32, a41, a42, a43
  std::array<Real, 4> b{};         // b1..b4
  std::array<Real, 4> literal_mu{};  // chain form mu_{s-3}, ..., mu_s
  Real extent = 0;                 // measured real stability extent
};

namespace detail {

using Series = std::array<Real, 5>;

inline Series series_mul(const Series& a, const Series& b) {
  Series r{};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; i + j < 5; ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline Series series_inv(const Series& a) {
  Series r{};
  r[0] = 1 / a[0];
  for (int k = 1; k < 5; ++k) {
    Real acc = 0;
    for (int j = 1; j <= k; ++j) acc += a[j] * r[k - j];
    r[k] = -acc / a[0];
  }
  return r;
}

inline Real poly_eval(const Series& c, Real z) {
  return (((c[4] * z + c[3]) * z + c[2]) * z + c[1]) * z + c[0];
}

struct Recurrence {
  std::vector<Real> mu, nu, kappa;
};

// Normalized recurrence P_j = (mu_j z - nu_j) P_{j-1} - kappa_j P_{j-2} of the
// polynomials orthogonal on the Chebyshev nodes with weights w4(z_k)^2.
inline Recurrence orthogonal_recurrence(int n, Real scale, const Series& w4) {
  const int nodes = n + 10;
  std::vector<Real> x(nodes), w(nodes);
  for (int k = 0; k < nodes; ++k) {
    x[k] = std::cos((2 * k + 1) * 3.14159265358979323846264338327950288L /
                    (2 * nodes));
    const Real z = scale * (x[k] - 1) / 2;
    const Real wz = poly_eval(w4, z);
    w[k] = wz * wz;
  }
  // Discretized Stieltjes procedure in orthonormal form; alpha and beta are
  // the coefficients of the monic recurrence
  // p_{k+1} = (x - alpha_k) p_k - beta_k p_{k-1}.
  std::vector<Real> alpha(n), beta(n + 1, 0);
  std::vector<Real> prev(nodes, 0), cur(nodes), next(nodes);
  Real total = 0;
  for (int i = 0; i < nodes; ++i) total += w[i];
  for (int i = 0; i < nodes; ++i) cur[i] = 1 / std::sqrt(total);
  for (int k = 0; k < n; ++k) {
    Real moment = 0;
    for (int i = 0; i < nodes; ++i) moment += w[i] * x[i] * cur[i] * cur[i];
    alpha[k] = moment;
    const Real root_beta = std::sqrt(beta[k]);
    Real norm = 0;
    for (int i = 0; i < nodes; ++i) {
      next[i] = (x[i] - alpha[k]) * cur[i] - root_beta * prev[i];
      norm += w[i] * next[i] * next[i];
    }
    beta[k + 1] = norm;
    const Real inv = 1 / std::sqrt(norm);
    for (int i = 0; i < nodes; ++i) {
      prev[i] = cur[i];
      cur[i] = next[i] * inv;
    }
  }
  // p_j(1): values of the monic polynomials at the endpoint x = 1 (z = 0).
  std::vector<Real> p1(n + 1);
  p1[0] = 1;
  if (n >= 1) p1[1] = 1 - alpha[0];
  for (int j = 2; j <= n; ++j)
    p1[j] = (1 - alpha[j - 1]) * p1[j - 1] - beta[j - 1] * p1[j - 2];

  Recurrence rec;
  rec.mu.assign(n + 1, 0);
  rec.nu.assign(n + 1, 0);
  rec.kappa.assign(n + 1, 0);
  if (n >= 1) rec.mu[1] = 2 / (scale * (1 - alpha[0]));
  for (int j = 2; j <= n; ++j) {
    rec.mu[j] = 2 / scale * p1[j - 1] / p1[j];
    rec.kappa[j] = beta[j - 1] * p1[j - 2] / p1[j];
    rec.nu[j] = -1 - rec.kappa[j];
  }
  return rec;
}

// First five Taylor coefficients of P_n at z = 0.
inline Series taylor_of_recurrence(const Recurrence& rec) {
  const int n = static_cast<int>(rec.mu.size()) - 1;
  Series older{1, 0, 0, 0, 0};
  if (n == 0) return older;
  Series old{1, rec.mu[1], 0, 0, 0};
  for (int j = 2; j <= n; ++j) {
    Series p{};
    for (int i = 0; i < 5; ++i) {
      p[i] = -rec.nu[j] * old[i] - rec.kappa[j] * older[i];
      if (i > 0) p[i] += rec.mu[j] * old[i - 1];
    }
    older = old;
    old = p;
  }
  return old;
}

inline Series exp_series() { return {1, 1, Real(1) / 2, Real(1) / 6, Real(1) / 24}; }

struct FixedPoint {
  Recurrence rec;
  Series w4;
};

inline std::optional<FixedPoint> solve_fixed_point(int n, Real scale) {
  Series w4 = exp_series();
  for (int it = 0; it < 400; ++it) {
    Recurrence rec = orthogonal_recurrence(n, scale, w4);
    const Series target = series_mul(exp_series(), series_inv(taylor_of_recurrence(rec)));
    Real change = 0;
    for (int i = 0; i < 5; ++i) change = std::max(change, std::fabs(target[i] - w4[i]));
    if (!std::isfinite(change)) return std::nullopt;
    if (change < 1e-16L) {
      // Final w4 is exactly the truncated quotient for the final P, so that
      // the product has fourth-order Taylor agreement with e^z.
      return FixedPoint{std::move(rec), target};
    }
    for (int i = 0; i < 5; ++i) w4[i] = (w4[i] + target[i]) / 2;
  }
  return std::nullopt;
}

inline Real amplification(const Recurrence& rec, const Series& w4, Real z) {
  const int n = static_cast<int>(rec.mu.size()) - 1;
  Real older = 1, old = n >= 1 ? 1 + rec.mu[1] * z : 1;
  for (int j = 2; j <= n; ++j) {
    const Real p = (rec.mu[j] * z - rec.nu[j]) * old - rec.kappa[j] * older;
    older = old;
    old = p;
  }
  return poly_eval(w4, z) * old;
}

inline Real max_abs_on(const FixedPoint& fp, Real scale, int samples) {
  Real worst = 0;
  for (int i = 0; i <= samples; ++i) {
    const Real z = -scale * i / samples;
    worst = std::max(worst, std::fabs(amplification(fp.rec, fp.w4, z)));
  }
  return worst;
}

// Largest l such that |R| <= 1 on [-l, 0] for the fixed point built with that l.
inline Real measured_extent(const FixedPoint& fp, Real scale) {
  const Real limit = 1 + 1e-12L;
  const int samples = 40000;
  const Real span = 1.5L * scale;
  Real good = 0;
  for (int i = 1; i <= samples; ++i) {
    const Real z = -span * i / samples;
    if (std::fabs(amplification(fp.rec, fp.w4, z)) > limit) {
      Real lo = good, hi = -z;
      for (int k = 0; k < 80; ++k) {
        const Real mid = (lo + hi) / 2;
        if (std::fabs(amplification(fp.rec, fp.w4, -mid)) > limit) hi = mid; else lo = mid;
      }
      return lo;
    }
    good = -z;
  }
  return span;
}

struct FirstPartWeights {
  Real p1, p2, p3, p4;       // tall trees: Taylor coefficients of P
  Real c2, c3, cac, ac2;     // sum a c^2, sum a c^3, sum a (c .* Ac), sum a A c^2
};

// Elementary weights of the output stage Y_n of the recurrence part, viewed as
// an explicit Runge-Kutta method with stages Y_0 .. Y_n.
inline FirstPartWeights first_part_weights(const Recurrence& rec) {
  const int n = static_cast<int>(rec.mu.size()) - 1;
  const int stages = n + 1;
  std::vector<std::vector<Real>> rows(stages, std::vector<Real>(stages, 0));
  if (n >= 1) rows[1][0] = rec.mu[1];
  for (int j = 2; j <= n; ++j)
    for (int k = 0; k < stages; ++k)
      rows[j][k] = (k == j - 1 ? rec.mu[j] : 0) - rec.nu[j] * rows[j - 1][k] -
                   rec.kappa[j] * rows[j - 2][k];
  std::vector<Real> c(stages, 0), ac(stages, 0), ac2(stages, 0), aac(stages, 0);
  for (int j = 0; j < stages; ++j)
    for (int k = 0; k < stages; ++k) c[j] += rows[j][k];
  for (int j = 0; j < stages; ++j)
    for (int k = 0; k < stages; ++k) {
      ac[j] += rows[j][k] * c[k];
      ac2[j] += rows[j][k] * c[k] * c[k];
    }
  for (int j = 0; j < stages; ++j)
    for (int k = 0; k < stages; ++k) aac[j] += rows[j][k] * ac[k];
  const auto& out = rows[n];
  FirstPartWeights fw{};
  for (int k = 0; k < stages; ++k) {
    fw.p1 += out[k];
    fw.p2 += out[k] * c[k];
    fw.p3 += out[k] * ac[k];
    fw.p4 += out[k] * aac[k];
    fw.c2 += out[k] * c[k] * c[k];
    fw.c3 += out[k] * c[k] * c[k] * c[k];
    fw.cac += out[k] * c[k] * ac[k];
    fw.ac2 += out[k] * ac2[k];
  }
  return fw;
}

// Elementary weights the finishing block must have so that the composite
// method satisfies all eight order conditions up to order four.
// Order: 1, c, c^2, Ac, c^3, c.Ac, Ac^2, AAc.
inline std::array<Real, 8> finishing_targets(const FirstPartWeights& f) {
  std::array<Real, 8> x{};
  x[0] = 1 - f.p1;
  x[1] = Real(1) / 2 - f.p2 - f.p1 * x[0];
  x[2] = Real(1) / 3 - f.c2 - f.p1 * f.p1 * x[0] - 2 * f.p1 * x[1];
  x[3] = Real(1) / 6 - f.p3 - f.p2 * x[0] - f.p1 * x[1];
  x[4] = Real(1) / 4 - f.c3 - f.p1 * f.p1 * f.p1 * x[0] - 3 * f.p1 * f.p1 * x[1] -
         3 * f.p1 * x[2];
  x[5] = Real(1) / 8 - f.cac - f.p1 * f.p2 * x[0] - (f.p1 * f.p1 + f.p2) * x[1] -
         f.p1 * x[2] - f.p1 * x[3];
  x[6] = Real(1) / 12 - f.ac2 - f.c2 * x[0] - f.p1 * f.p1 * x[1] - 2 * f.p1 * x[3];
  x[7] = Real(1) / 24 - f.p4 - f.p3 * x[0] - f.p2 * x[1] - f.p1 * x[3];
  return x;
}

struct Tableau {
  std::array<Real, 6> a{};
  std::array<Real, 4> b{};
  Real residual = 0;
  bool ok = false;
};

// Given abscissae (0, c2, c3, c4), everything but the last condition is linear.
inline Tableau finishing_for(const std::array<Real, 8>& x, Real c2, Real c3, Real c4) {
  Tableau t;
  // Vandermonde system for b: sum b c^k = x[0], x[1], x[2], x[4].
  Real m[4][5] = {{1, 1, 1, 1, x[0]},
                  {0, c2, c3, c4, x[1]},
                  {0, c2 * c2, c3 * c3, c4 * c4, x[2]},
                  {0, c2 * c2 * c2, c3 * c3 * c3, c4 * c4 * c4, x[4]}};
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    if (std::fabs(m[piv][col]) < 1e-30L) return t;
    for (int k = 0; k < 5; ++k) std::swap(m[col][k], m[piv][k]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const Real f = m[r][col] / m[col][col];
      for (int k = 0; k < 5; ++k) m[r][k] -= f * m[col][k];
    }
  }
  for (int i = 0; i < 4; ++i) t.b[i] = m[i][4] / m[i][i];
  const Real b3 = t.b[2], b4 = t.b[3];
  // q3 = (A c)_3, q4 = (A c)_4 from the Ac and c.Ac conditions.
  const Real det = b3 * b4 * c4 - b4 * b3 * c3;
  if (std::fabs(det) < 1e-30L) return t;
  const Real q3 = (x[3] * b4 * c4 - b4 * x[5]) / det;
  const Real q4 = (b3 * x[5] - b3 * c3 * x[3]) / det;
  const Real denom = b4 * c3 * (c3 - c2);
  if (std::fabs(denom) < 1e-30L) return t;
  const Real a43 = (x[6] - b3 * q3 * c2 - b4 * c2 * q4) / denom;
  const Real a42 = (q4 - a43 * c3) / c2;
  const Real a32 = q3 / c2;
  t.a = {c2, c3 - a32, a32, c4 - a42 - a43, a42, a43};
  t.residual = b4 * a43 * q3 - x[7];
  t.ok = std::isfinite(t.residual);
  return t;
}

inline std::optional<Tableau> solve_finishing(const std::array<Real, 8>& x) {
  const Real span = x[0];
  const Real c2 = span / 4, c3 = span / 2;
  std::optional<Tableau> best;
  auto size_of = [](const Tableau& t) {
    Real m = 0;
    for (Real v : t.a) m = std::max(m, std::fabs(v));
    for (Real v : t.b) m = std::max(m, std::fabs(v));
    return m;
  };
  const int samples = 1200;
  Real prev_c = 0;
  Tableau prev;
  for (int i = 0; i <= samples; ++i) {
    const Real c4 = span * (Real(0.02) + Real(3) * i / samples);
    Tableau cur = finishing_for(x, c2, c3, c4);
    if (i > 0 && prev.ok && cur.ok && (prev.residual < 0) != (cur.residual < 0)) {
      Real lo = prev_c, hi = c4;
      Real flo = prev.residual;
      for (int k = 0; k < 200; ++k) {
        const Real mid = (lo + hi) / 2;
        const Tableau tm = finishing_for(x, c2, c3, mid);
        if (!tm.ok) break;
        if ((tm.residual < 0) == (flo < 0)) { lo = mid; flo = tm.residual; } else { hi = mid; }
      }
      Tableau root = finishing_for(x, c2, c3, (lo + hi) / 2);
      // Sign changes across poles are rejected by the residual check.
      if (root.ok && std::fabs(root.residual) < 1e-15L &&
          (!best || size_of(root) < size_of(*best)))
        best = root;
    }
    prev = cur;
    prev_c = c4;
  }
  return best;
}

}  // namespace detail

/// Runs the full construction for one degree. Throws std::runtime_error when
/// no admissible method is found.
inline DesignedMethod design(int substeps) {
  if (substeps < 5) throw std::invalid_argument("fourth-order design needs substeps >= 5");
  const int n = substeps - 4;
  const Real s2 = Real(substeps) * substeps;
  auto feasible = [&](Real ratio) -> std::optional<detail::FixedPoint> {
    auto fp = detail::solve_fixed_point(n, ratio * s2);
    if (!fp) return std::nullopt;
    if (detail::max_abs_on(*fp, ratio * s2, 20000) > 1 + 1e-12L) return std::nullopt;
    return fp;
  };
  // Coarse scan for the upper edge of the admissible range of l / s^2.
  Real good = -1;
  for (int i = 0; i <= 40; ++i) {
    const Real ratio = Real(0.15) + Real(0.01) * i;
    if (feasible(ratio)) {
      good = ratio;
    } else if (good > 0) {
      break;
    }
  }
  if (good < 0) throw std::runtime_error("no admissible stability interval found");
  Real lo = good, hi = good + Real(0.01);
  for (int k = 0; k < 40; ++k) {
    const Real mid = (lo + hi) / 2;
    if (feasible(mid)) lo = mid; else hi = mid;
  }
  // Back off slightly from the edge so that interior maxima stay below one.
  const Real ratio = lo * Real(0.98);
  auto fp = feasible(ratio);
  if (!fp) throw std::runtime_error("backed-off stability interval is not admissible");

  DesignedMethod m;
  m.substeps = substeps;
  m.scale = ratio * s2;
  m.mu = fp->rec.mu;
  m.kappa = fp->rec.kappa;
  m.w4 = fp->w4;
  m.literal_mu = {m.w4[4] / m.w4[3], m.w4[3] / m.w4[2], m.w4[2] / m.w4[1], m.w4[1]};
  m.extent = detail::measured_extent(*fp, m.scale);

  const auto targets = detail::finishing_targets(detail::first_part_weights(fp->rec));
  auto tab = detail::solve_finishing(targets);
  if (!tab) throw std::runtime_error("finishing procedure has no admissible solution");
  m.a = tab->a;
  m.b = tab->b;
  return m;
}

}  // namespace stork::rock4_design
