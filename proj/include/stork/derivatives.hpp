#pragma once

#include <cmath>
#include <deque>
#include <utility>
#include <vector>

#include "stork/core.hpp"

namespace stork {

/// Finite-difference weights for derivatives 0..max_order at `anchor` from
/// values at the given nodes (Fornberg's algorithm, arbitrary spacing).
/// Result: weights[m][k] multiplies the value at node k for derivative m.
inline std::vector<std::vector<double>> fornberg_weights(double anchor, const std::vector<double>& nodes,
                                                         int max_order) {
  const int n = static_cast<int>(nodes.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (nodes[i] == nodes[j]) throw ConfigError("finite differences: coincident times");
  std::vector<std::vector<double>> c(max_order + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = nodes[0] - anchor;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, max_order);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - anchor;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

/// A (time, value) sample of a field along a trajectory.
template <class Scalar = double>
using TimedValue = std::pair<double, Batch<Scalar>>;

template <class Scalar>
struct Derivatives {
  Batch<Scalar> d1, d2, d3;
};

/// First and second derivatives at `anchor` from three samples, any spacing.
template <class Scalar>
Derivatives<Scalar> fd_derivatives_3pt(const std::vector<TimedValue<Scalar>>& evals, double anchor) {
  if (evals.size() != 3) throw ConfigError("fd_derivatives_3pt: exactly three samples required");
  std::vector<double> nodes;
  for (const auto& e : evals) nodes.push_back(e.first);
  const auto w = fornberg_weights(anchor, nodes, 2);
  Derivatives<Scalar> d;
  d.d1 = Scalar(w[1][0]) * evals[0].second + Scalar(w[1][1]) * evals[1].second + Scalar(w[1][2]) * evals[2].second;
  d.d2 = Scalar(w[2][0]) * evals[0].second + Scalar(w[2][1]) * evals[1].second + Scalar(w[2][2]) * evals[2].second;
  return d;
}

/// Forward stencils at the first of four samples spaced h apart:
/// (-11, 18, -9, 2)/(6h), (2, -5, 4, -1)/h^2, (-1, 3, -3, 1)/h^3.
template <class Scalar>
Derivatives<Scalar> fd_derivatives_4pt_uniform(const std::vector<TimedValue<Scalar>>& evals, double h) {
  if (evals.size() != 4) throw ConfigError("fd_derivatives_4pt_uniform: exactly four samples required");
  if (!(h != 0)) throw ConfigError("fd_derivatives_4pt_uniform: zero spacing");
  const double tol = 1e-9 * std::abs(h);
  for (int k = 1; k < 4; ++k)
    if (std::abs(evals[k].first - evals[k - 1].first - h) > tol)
      throw ConfigError("fd_derivatives_4pt_uniform: samples are not uniformly spaced");
  const auto& f0 = evals[0].second;
  const auto& f1 = evals[1].second;
  const auto& f2 = evals[2].second;
  const auto& f3 = evals[3].second;
  Derivatives<Scalar> d;
  d.d1 = (Scalar(-11) * f0 + Scalar(18) * f1 - Scalar(9) * f2 + Scalar(2) * f3) / Scalar(6 * h);
  d.d2 = (Scalar(2) * f0 - Scalar(5) * f1 + Scalar(4) * f2 - f3) / Scalar(h * h);
  d.d3 = (-f0 + Scalar(3) * f1 - Scalar(3) * f2 + f3) / Scalar(h * h * h);
  return d;
}

/// The n+1 most recent real evaluations and the derivatives they imply at the
/// newest one (the anchor). Times are strictly monotone, anchor last.
template <class Scalar = double>
class DerivativeCache {
 public:
  explicit DerivativeCache(int order = 2) : order_(order) {
    if (order != 2 && order != 3) throw ConfigError("taylor order must be 2 or 3");
  }

  int order() const { return order_; }
  int capacity() const { return order_ + 1; }
  const std::deque<TimedValue<Scalar>>& stored() const { return stored_; }
  bool primed() const { return primed_; }
  double anchor_time() const { return anchor_time_; }
  const Batch<Scalar>& anchor_value() const { return anchor_value_; }
  const Batch<Scalar>& d1() const { return d_.d1; }
  const Batch<Scalar>& d2() const { return d_.d2; }
  const Batch<Scalar>& d3() const { return d_.d3; }

  /// Records a real evaluation, dropping the oldest beyond capacity.
  void push(double t, Batch<Scalar> value) {
    if (!stored_.empty()) {
      const double last = stored_.back().first;
      const bool ok = stored_.size() < 2 ? t != last
                                         : (t - last) * (last - stored_[stored_.size() - 2].first) > 0;
      if (!ok) throw ConfigError("derivative cache: times must be strictly monotone");
    }
    stored_.emplace_back(t, std::move(value));
    while (static_cast<int>(stored_.size()) > capacity()) stored_.pop_front();
    primed_ = false;
  }

  /// Re-anchors at the newest sample using all stored samples.
  void refresh() {
    if (static_cast<int>(stored_.size()) != capacity())
      throw ConfigError("derivative cache: needs " + std::to_string(capacity()) + " samples");
    std::vector<double> nodes;
    for (const auto& e : stored_) nodes.push_back(e.first);
    anchor_time_ = stored_.back().first;
    anchor_value_ = stored_.back().second;
    const auto w = fornberg_weights(anchor_time_, nodes, order_);
    auto combine = [&](int m) {
      Batch<Scalar> acc = Scalar(w[m][0]) * stored_[0].second;
      for (int k = 1; k < capacity(); ++k) acc += Scalar(w[m][k]) * stored_[k].second;
      return acc;
    };
    d_.d1 = combine(1);
    d_.d2 = combine(2);
    if (order_ == 3) d_.d3 = combine(3);
    else d_.d3.resize(0, 0);
    primed_ = true;
  }

  /// Sets the anchor and derivatives directly (stencils chosen by the caller).
  void set(double anchor_time, Batch<Scalar> anchor_value, Derivatives<Scalar> d) {
    anchor_time_ = anchor_time;
    anchor_value_ = std::move(anchor_value);
    d_ = std::move(d);
    primed_ = true;
  }

  void clear() {
    stored_.clear();
    primed_ = false;
  }

 private:
  int order_;
  std::deque<TimedValue<Scalar>> stored_;
  bool primed_ = false;
  double anchor_time_ = 0;
  Batch<Scalar> anchor_value_;
  Derivatives<Scalar> d_;
};

/// anchor + dt d1 + dt^2/2 d2 (+ dt^3/6 d3 for order 3).
template <class Scalar>
Batch<Scalar> taylor_eval(const DerivativeCache<Scalar>& cache, int order, double dt) {
  if (!cache.primed()) throw ConfigError("taylor_eval: cache not primed");
  if (order != 2 && order != 3) throw ConfigError("taylor_eval: order must be 2 or 3");
  if (order == 3 && cache.d3().size() == 0) throw ConfigError("taylor_eval: order-3 request on an order-2 cache");
  Batch<Scalar> out = cache.anchor_value() + Scalar(dt) * cache.d1() + Scalar(dt * dt / 2) * cache.d2();
  if (order == 3) out += Scalar(dt * dt * dt / 6) * cache.d3();
  return out;
}

}  // namespace stork
