#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "stork/core.hpp"
#include "stork/rock4_table_format.hpp"

namespace stork {

namespace detail::rock4_table {
#include "stork/detail/rock4_table.inc"
}  // namespace detail::rock4_table

/// Gegenbauer polynomial C_degree^{(3/2)}(x) by the three-term recurrence.
template <class T>
T gegenbauer_c32(int degree, T x) {
  if (degree < 0) throw ConfigError("gegenbauer_c32: degree must be >= 0");
  T prev(1);
  if (degree == 0) return prev;
  T cur = T(3) * x;
  for (int j = 2; j <= degree; ++j) {
    const double jd = j;
    T next = (T(2.0 * jd + 1.0) * x * cur - T(jd + 1.0) * prev) / T(jd);
    prev = cur;
    cur = next;
  }
  return cur;
}

namespace detail {

__extension__ typedef __int128 int128;

// Exact rational arithmetic for the RKG2 formulas; reduced after every step.
struct Rational {
  int128 p = 0;
  int128 q = 1;

  static int128 gcd(int128 a, int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      const int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }
  static Rational make(int128 p, int128 q) {
    if (q < 0) {
      p = -p;
      q = -q;
    }
    const int128 g = gcd(p, q);
    if (g > 1) {
      p /= g;
      q /= g;
    }
    return {p, q};
  }
  friend Rational operator*(Rational a, Rational b) {
    // Cross-reduce first to keep intermediates small.
    const int128 g1 = gcd(a.p, b.q), g2 = gcd(b.p, a.q);
    const int128 d1 = g1 > 1 ? g1 : 1, d2 = g2 > 1 ? g2 : 1;
    return make((a.p / d1) * (b.p / d2), (a.q / d2) * (b.q / d1));
  }
  friend Rational operator/(Rational a, Rational b) { return a * Rational{b.q, b.p}.normalized(); }
  friend Rational operator-(Rational a, Rational b) {
    const int128 g = gcd(a.q, b.q);
    return make(a.p * (b.q / g) - b.p * (a.q / g), a.q / g * b.q);
  }
  friend Rational operator+(Rational a, Rational b) { return a - Rational{-b.p, b.q}; }
  Rational operator-() const { return {-p, q}; }
  Rational normalized() const { return make(p, q); }
  double value() const { return static_cast<double>(static_cast<long double>(p) / static_cast<long double>(q)); }
  long double lvalue() const { return static_cast<long double>(p) / static_cast<long double>(q); }
};

inline Rational rkg2_b(int j) {
  if (j <= 2) j = 2;  // b_0 = b_1 = b_2
  return Rational::make(int128(4) * (j - 1) * (j + 4), int128(3) * j * (j + 1) * (j + 2) * (j + 3));
}

inline Rational rkg2_a(int j) {
  if (j == 0) return Rational{1, 1} - rkg2_b(0);
  if (j == 1) return Rational{1, 1} - Rational{3, 1} * rkg2_b(1);
  // 1 - (j+1)(j+2)/2 * b_j, simplified.
  return Rational::make(int128(j) * j + 3 * j + 8, int128(3) * j * (j + 3));
}

}  // namespace detail

/// Runge-Kutta-Gegenbauer coefficients for s stages. Arrays are indexed by
/// stage number 0..s; entries outside a coefficient's defined range are 0.
struct Rkg2Coefficients {
  int substeps = 0;
  double w1 = 0;
  std::vector<double> a, b;
  std::vector<double> mu, nu, mu_tilde, gamma_tilde;
  /// Stage abscissae: stage j sits at t_0 - h * c[j].
  std::vector<double> c;
};

inline constexpr int kMaxRkg2Substeps = 1000;

inline Rkg2Coefficients rkg2_coeffs(int substeps) {
  using detail::Rational;
  if (substeps < 2) throw ConfigError("rkg2: substeps must be >= 2, got " + std::to_string(substeps));
  if (substeps > kMaxRkg2Substeps)
    throw ConfigError("rkg2: substeps must be <= " + std::to_string(kMaxRkg2Substeps));
  const int s = substeps;
  Rkg2Coefficients k;
  k.substeps = s;
  const Rational w1 = Rational::make(6, detail::int128(s + 4) * (s - 1));
  k.w1 = w1.value();
  std::vector<Rational> a(s + 1), b(s + 1), mu(s + 1), nu(s + 1), mut(s + 1), gt(s + 1);
  for (int j = 0; j <= s; ++j) {
    a[j] = detail::rkg2_a(j);
    b[j] = detail::rkg2_b(j);
  }
  mut[1] = Rational{3, 1} * w1 * b[1];
  for (int j = 2; j <= s; ++j) {
    mu[j] = Rational::make(2 * j + 1, j) * (b[j] / b[j - 1]);
    nu[j] = -(Rational::make(j + 1, j) * (b[j] / b[j - 2]));
    mut[j] = mu[j] * w1;
    gt[j] = -(mut[j] * a[j - 1]);
  }
  auto values = [](const std::vector<Rational>& r) {
    std::vector<double> v(r.size());
    std::transform(r.begin(), r.end(), v.begin(), [](const Rational& x) { return x.value(); });
    return v;
  };
  k.a = values(a);
  k.b = values(b);
  k.mu = values(mu);
  k.nu = values(nu);
  k.mu_tilde = values(mut);
  k.gamma_tilde = values(gt);

  // Unit-rate problem: each -h v term contributes its weight, states carry c.
  std::vector<long double> c(s + 1, 0.0L);
  c[1] = mut[1].lvalue();
  for (int j = 2; j <= s; ++j)
    c[j] = mu[j].lvalue() * c[j - 1] + nu[j].lvalue() * c[j - 2] + mut[j].lvalue() + gt[j].lvalue();
  k.c.assign(c.begin(), c.end());
  return k;
}

/// a_s + b_s C_s^{(3/2)}(1 + w1 z).
template <class T>
T rkg2_stability_poly(const Rkg2Coefficients& k, T z) {
  const int s = k.substeps;
  return T(k.a[s]) + T(k.b[s]) * gegenbauer_c32(s, T(1) + T(k.w1) * z);
}

/// Fourth-order orthogonal Runge-Kutta-Chebyshev coefficients.
///
/// The first s-4 stages follow Y_j = -h mu_j v(Y_{j-1}) - nu_j Y_{j-1} -
/// kappa_j Y_{j-2} with nu_j = -1 - kappa_j. The last four form an explicit
/// Runge-Kutta step from Y_{s-4} with tableau (a, b).
struct Rock4Coefficients {
  int requested = 0;  ///< degree asked for; differs from substeps after rounding
  int substeps = 0;
  std::vector<double> mu;     ///< mu[1..s-4]
  std::vector<double> nu;     ///< nu[2..s-4]
  std::vector<double> kappa;  ///< kappa[2..s-4]
  std::array<double, 6> a{};  ///< a21, a31, a32, a41, a42, a43
  std::array<double, 4> b{};
  /// Chain coefficients mu_{s-3}..mu_s for the single-chain finishing form
  /// Y_j = Y_{s-4} - h mu_j v(Y_{j-1}); equal to the tableau only on linear problems.
  std::array<double, 4> literal_mu{};
  std::array<double, 5> w4{};  ///< w4(z) = sum w4[k] z^k
  double stability_extent = 0;
  double scale = 0;            ///< orthogonality interval [-scale, 0]
  std::vector<double> c;       ///< abscissae for stages 0..s (tableau finishing)
  std::vector<double> c_literal;

  int recurrence_stages() const { return substeps - 4; }
};

namespace detail {

inline std::vector<double> rock4_abscissae(const Rock4Coefficients& k, bool literal) {
  const int n = k.recurrence_stages(), s = k.substeps;
  std::vector<long double> c(s + 1, 0.0L);
  c[1] = k.mu[1];
  for (int j = 2; j <= n; ++j) c[j] = c[j - 1] + k.kappa[j] * (c[j - 1] - c[j - 2]) + k.mu[j];
  const long double base = c[n];
  if (literal) {
    for (int q = 0; q < 4; ++q) c[n + 1 + q] = base + k.literal_mu[q];
  } else {
    // Abscissa of finishing stage q+1 is the row sum of the tableau; the
    // endpoint is base + sum(b).
    const auto& a = k.a;
    c[n + 1] = base + a[0];
    c[n + 2] = base + a[1] + a[2];
    c[n + 3] = base + a[3] + a[4] + a[5];
    c[n + 4] = base + k.b[0] + k.b[1] + k.b[2] + k.b[3];
  }
  return {c.begin(), c.end()};
}

}  // namespace detail

/// Scalar amplification of one exact ROCK4 step on v = -z x with h = 1.
template <class T>
T rock4_amplification(const Rock4Coefficients& k, T z, bool literal = false) {
  const int n = k.recurrence_stages();
  T older(1), old = T(1) + T(k.mu[1]) * z;
  for (int j = 2; j <= n; ++j) {
    T next = old + T(k.kappa[j]) * (old - older) + T(k.mu[j]) * z * old;
    older = old;
    old = next;
  }
  const T y = old;
  if (literal) {
    T cur = y;
    for (int q = 0; q < 4; ++q) cur = y + T(k.literal_mu[q]) * z * cur;
    return cur;
  }
  const auto& a = k.a;
  const T k1 = z * y;
  const T k2 = z * (y + T(a[0]) * k1);
  const T k3 = z * (y + T(a[1]) * k1 + T(a[2]) * k2);
  const T k4 = z * (y + T(a[3]) * k1 + T(a[4]) * k2 + T(a[5]) * k3);
  return y + T(k.b[0]) * k1 + T(k.b[1]) * k2 + T(k.b[2]) * k3 + T(k.b[3]) * k4;
}

/// Closed form w4(z) P_{s-4}(z) of the ROCK4 stability polynomial.
template <class T>
T rock4_stability_poly(const Rock4Coefficients& k, T z) {
  const int n = k.recurrence_stages();
  T older(1), old = T(1) + T(k.mu[1]) * z;
  for (int j = 2; j <= n; ++j) {
    T next = (T(k.mu[j]) * z - T(k.nu[j])) * old - T(k.kappa[j]) * older;
    older = old;
    old = next;
  }
  T w(0);
  for (int q = 4; q >= 0; --q) w = w * z + T(k.w4[q]);
  return w * old;
}

/// Outcome of a consistency check at z = 0.
struct ConsistencyReport {
  std::string method;
  int substeps = 0;
  std::vector<double> taylor;      ///< Taylor coefficients r_k of R at 0
  std::vector<double> target;      ///< exp-series targets 1/k!
  std::vector<double> derivative;  ///< k! r_k
  std::vector<double> deviation;   ///< |r_k - 1/k!| scaled as the check requires
  double max_deviation = 0;
  double tolerance = 0;
  bool ok = false;
};

namespace detail {

// Taylor coefficients at 0 of an entire function by the trapezoidal rule on a
// circle of radius rho (exact for polynomials of degree < points).
template <class Fn>
std::vector<double> taylor_coefficients(Fn&& R, int count, double rho, int points) {
  std::vector<std::complex<double>> vals(points);
  for (int m = 0; m < points; ++m) {
    const double th = 2 * kPi * m / points;
    vals[m] = R(std::polar(rho, th));
  }
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k) {
    std::complex<double> acc = 0;
    for (int m = 0; m < points; ++m) acc += vals[m] * std::polar(1.0, -2 * kPi * k * m / points);
    out[k] = (acc / double(points)).real() / std::pow(rho, k);
  }
  return out;
}

inline ConsistencyReport finish_report(std::string method, int s, std::vector<double> taylor,
                                       double tol, bool derivative_scale) {
  ConsistencyReport r;
  r.method = std::move(method);
  r.substeps = s;
  r.taylor = std::move(taylor);
  r.tolerance = tol;
  double fact = 1;
  for (std::size_t k = 0; k < r.taylor.size(); ++k) {
    if (k > 0) fact *= double(k);
    r.target.push_back(1 / fact);
    r.derivative.push_back(r.taylor[k] * fact);
    const double dev = derivative_scale ? std::abs(r.taylor[k] * fact - 1) : std::abs(r.taylor[k] - 1 / fact);
    r.deviation.push_back(dev);
    r.max_deviation = std::max(r.max_deviation, dev);
  }
  r.ok = r.max_deviation < tol;
  return r;
}

}  // namespace detail

/// Checks R(0) = R'(0) = R''(0) = 1 for the RKG2 recurrence; deviations are
/// |R^(k)(0) - 1|.
inline ConsistencyReport validate_consistency(const Rkg2Coefficients& k, double tol = 1e-7) {
  auto R = [&](std::complex<double> z) {
    const int s = k.substeps;
    using C = std::complex<double>;
    // Recurrence on v = -z x, h = 1, in the zero-field-exact difference form.
    C y0(1), older = y0, old = y0 + k.mu_tilde[1] * z * y0;
    for (int j = 2; j <= s; ++j) {
      C next = y0 + k.mu[j] * (old - y0) + k.nu[j] * (older - y0) + k.mu_tilde[j] * z * old +
               k.gamma_tilde[j] * z * y0;
      older = old;
      old = next;
    }
    return old;
  };
  return detail::finish_report("rkg2", k.substeps, detail::taylor_coefficients(R, 3, 0.25, 128), tol,
                               true);
}

/// Checks the Taylor coefficients of one ROCK4 step against 1, 1, 1/2, 1/6, 1/24.
inline ConsistencyReport validate_consistency(const Rock4Coefficients& k, double tol = 1e-6) {
  auto R = [&](std::complex<double> z) { return rock4_amplification(k, z); };
  return detail::finish_report("rock4", k.substeps, detail::taylor_coefficients(R, 5, 0.25, 128), tol,
                               false);
}

/// Every degree the embedded ROCK4 table covers, ascending.
inline const std::vector<int>& rock4_supported_degrees() {
  static const std::vector<int> degrees(std::begin(detail::rock4_table::kDegrees),
                                        std::end(detail::rock4_table::kDegrees));
  return degrees;
}

inline const char* rock4_table_version() { return detail::rock4_table::kVersion; }

inline std::uint64_t rock4_table_checksum() { return detail::rock4_table::kChecksum; }

namespace detail {

inline std::uint64_t rock4_recomputed_checksum() {
  namespace t = rock4_table;
  auto vec = [](const auto& arr) { return std::vector<double>(std::begin(arr), std::end(arr)); };
  const auto scale = vec(t::kScale), extent = vec(t::kExtent), mu = vec(t::kMu), kappa = vec(t::kKappa),
             fin = vec(t::kFinishing), lit = vec(t::kLiteralMu), w4 = vec(t::kW4);
  return rock4_table_format::checksum({&scale, &extent, &mu, &kappa, &fin, &lit, &w4});
}

inline Rock4Coefficients rock4_decode(std::size_t index) {
  namespace t = rock4_table;
  Rock4Coefficients k;
  const int s = t::kDegrees[index];
  const int n = s - 4;
  k.requested = k.substeps = s;
  k.scale = t::kScale[index];
  k.stability_extent = t::kExtent[index];
  const int off = t::kOffsets[index];
  if (t::kOffsets[index + 1] - off != n) throw std::runtime_error("rock4 table: inconsistent offsets");
  k.mu.assign(n + 1, 0.0);
  k.kappa.assign(n + 1, 0.0);
  k.nu.assign(n + 1, 0.0);
  for (int j = 1; j <= n; ++j) {
    k.mu[j] = t::kMu[off + j - 1];
    if (j >= 2) {
      k.kappa[j] = t::kKappa[off + j - 1];
      k.nu[j] = -1.0 - k.kappa[j];
    }
  }
  for (int q = 0; q < 6; ++q) k.a[q] = t::kFinishing[10 * index + q];
  for (int q = 0; q < 4; ++q) k.b[q] = t::kFinishing[10 * index + 6 + q];
  for (int q = 0; q < 4; ++q) k.literal_mu[q] = t::kLiteralMu[4 * index + q];
  k.w4[0] = 1.0;
  for (int q = 1; q <= 4; ++q) k.w4[q] = t::kW4[4 * index + q - 1];
  k.c = rock4_abscissae(k, false);
  k.c_literal = rock4_abscissae(k, true);
  return k;
}

// Load-time validation: fourth-order Taylor check and |R| <= 1 on the extent.
inline void rock4_validate(const Rock4Coefficients& k) {
  const auto rep = validate_consistency(k);
  if (!rep.ok) {
    throw std::runtime_error("rock4 table: degree " + std::to_string(k.substeps) +
                             " fails the fourth-order check (deviation " + std::to_string(rep.max_deviation) +
                             ")");
  }
  for (int i = 1; i <= 200; ++i) {
    const double z = -k.stability_extent * i / 201.0;
    if (std::abs(rock4_amplification(k, z)) > 1 + 1e-8)
      throw std::runtime_error("rock4 table: degree " + std::to_string(k.substeps) +
                               " exceeds |R| <= 1 inside its extent");
  }
}

struct Rock4Cache {
  std::mutex lock;
  std::map<int, std::shared_ptr<const Rock4Coefficients>> loaded;
  bool checksum_verified = false;
};

inline Rock4Cache& rock4_cache() {
  static Rock4Cache cache;
  return cache;
}

}  // namespace detail

/// Smallest supported degree >= substeps, or -1 past the end of the table.
inline int rock4_round_up(int substeps) {
  const auto& d = rock4_supported_degrees();
  const auto it = std::lower_bound(d.begin(), d.end(), substeps);
  return it == d.end() ? -1 : *it;
}

/// Coefficients for the requested degree. Unsupported degrees round up to the
/// next tabulated one (recorded in `requested`) unless strict is set.
inline Rock4Coefficients rock4_coeffs(int substeps, bool strict = false) {
  const auto& d = rock4_supported_degrees();
  const auto it = std::lower_bound(d.begin(), d.end(), substeps);
  const bool exact = it != d.end() && *it == substeps;
  if (!exact) {
    const std::string head = "rock4: unsupported degree " + std::to_string(substeps);
    if (substeps < d.front()) throw ConfigError(head + "; minimum supported degree is " + std::to_string(d.front()));
    if (it == d.end()) throw ConfigError(head + "; maximum supported degree is " + std::to_string(d.back()));
    if (strict) {
      throw ConfigError(head + "; nearest supported degrees: " + std::to_string(*(it - 1)) + " " +
                        std::to_string(*it));
    }
  }
  const int degree = *it;
  const auto index = static_cast<std::size_t>(it - d.begin());

  auto& cache = detail::rock4_cache();
  std::shared_ptr<const Rock4Coefficients> entry;
  {
    std::lock_guard<std::mutex> guard(cache.lock);
    if (!cache.checksum_verified) {
      if (detail::rock4_recomputed_checksum() != detail::rock4_table::kChecksum)
        throw std::runtime_error("rock4 table: checksum mismatch");
      cache.checksum_verified = true;
    }
    auto found = cache.loaded.find(degree);
    if (found == cache.loaded.end()) {
      auto k = std::make_shared<Rock4Coefficients>(detail::rock4_decode(index));
      detail::rock4_validate(*k);
      found = cache.loaded.emplace(degree, std::move(k)).first;
    }
    entry = found->second;
  }
  Rock4Coefficients out = *entry;
  out.requested = substeps;
  return out;
}

/// Stage abscissae c_0..c_s: stage j is evaluated at t_0 - h c_j.
inline std::vector<double> stage_abscissae(const Rkg2Coefficients& k) { return k.c; }
inline std::vector<double> stage_abscissae(const Rock4Coefficients& k, bool literal = false) {
  return literal ? k.c_literal : k.c;
}

}  // namespace stork
