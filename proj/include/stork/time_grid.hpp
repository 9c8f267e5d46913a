#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stork/core.hpp"

namespace stork {

enum class ScheduleKind { uniform, flow_shift, custom };

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::uniform: return "uniform";
    case ScheduleKind::flow_shift: return "flow_shift";
    case ScheduleKind::custom: return "custom";
  }
  return "?";
}

/// Super-step schedule t_0 < t_1 < ... < t_M. Solvers start at t_M and end at t_0.
struct TimeGrid {
  std::vector<double> points;
  ScheduleKind kind = ScheduleKind::custom;
  double shift = 1.0;
  double epsilon_floor = 0.0;

  int M() const { return static_cast<int>(points.size()) - 1; }
  /// h_i = t_i - t_{i-1}, 1 <= i <= M.
  double h(int i) const { return points.at(i) - points.at(i - 1); }
  double t(int i) const { return points.at(i); }

  bool is_uniform(double rel_tol = 1e-9) const {
    const double h1 = h(1);
    for (int i = 2; i <= M(); ++i)
      if (std::abs(h(i) - h1) > rel_tol * std::abs(h1)) return false;
    return true;
  }

  void validate() const {
    if (points.size() < 2) throw ConfigError("time grid: need at least one step");
    for (std::size_t i = 1; i < points.size(); ++i)
      if (!(points[i] > points[i - 1])) throw ConfigError("time grid: points must be strictly increasing");
  }

  static TimeGrid custom(std::vector<double> pts) {
    TimeGrid g;
    g.points = std::move(pts);
    g.validate();
    return g;
  }

  /// M equal steps on [t_lo, t_hi].
  static TimeGrid uniform(int M, double t_lo, double t_hi) {
    if (M < 1) throw ConfigError("time grid: M must be >= 1");
    if (!(t_hi > t_lo)) throw ConfigError("time grid: t_hi must exceed t_lo");
    TimeGrid g;
    g.kind = ScheduleKind::uniform;
    g.points.resize(M + 1);
    for (int i = 0; i <= M; ++i) g.points[i] = t_lo + (t_hi - t_lo) * i / M;
    g.points[M] = t_hi;
    return g;
  }

  /// Uniform fractions u warped by u' = shift u / (1 + (shift - 1) u).
  static TimeGrid flow_shift(int M, double shift, double t_lo, double t_hi) {
    if (!(shift > 0)) throw ConfigError("time grid: shift must be > 0");
    TimeGrid g = uniform(M, t_lo, t_hi);
    g.kind = ScheduleKind::flow_shift;
    g.shift = shift;
    for (int i = 0; i <= M; ++i) {
      const double u = static_cast<double>(i) / M;
      g.points[i] = t_lo + (t_hi - t_lo) * (shift * u / (1 + (shift - 1) * u));
    }
    g.points[0] = t_lo;
    g.points[M] = t_hi;
    g.validate();
    return g;
  }

  /// Uniform grid from t_hi down to the noise floor eps > 0.
  static TimeGrid noise(int M, double epsilon_floor, double t_hi) {
    if (!(epsilon_floor > 0)) throw ConfigError("time grid: epsilon_floor must be > 0");
    TimeGrid g = uniform(M, epsilon_floor, t_hi);
    g.epsilon_floor = epsilon_floor;
    return g;
  }
};

inline constexpr double kDefaultFlowShift = 3.0;

}  // namespace stork
