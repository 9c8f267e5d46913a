#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stork/scheduler.hpp"
#include "stork/stepper.hpp"

namespace stork {

namespace detail {

inline void check_state(const Batch<>& x_init, int dim) {
  if (x_init.size() == 0) throw ConfigError("initial state is empty");
  if (dim > 0 && x_init.rows() != dim)
    throw ConfigError("initial state has dimension " + std::to_string(x_init.rows()) + ", field expects " +
                      std::to_string(dim));
}

}  // namespace detail

/// Solves dx/dt = v from grid index M (x_init) down to 0 with x <- x - h v.
/// All configuration checks run before the first field evaluation.
inline SolveReport solve_flow(const Batch<>& x_init, const TimeGrid& grid, const VelocityField<>& field,
                              const SolverConfig& cfg) {
  grid.validate();
  detail::check_state(x_init, field.dim);
  if (cfg.method == Method::stork4_noise) throw ConfigError("stork4_noise needs a noise model; use solve_noise");
  const int M = grid.M();

  if (is_stork(cfg.method) && cfg.substage_mode == SubstageMode::taylor) {
    FlowScheduler sched(grid, cfg, x_init);
    while (!sched.done()) sched.step(field(sched.query_state(), sched.next_query_time()));
    return sched.report();
  }

  std::optional<Rkg2Coefficients> rkg2;
  std::optional<Rock4Coefficients> rock4;
  if (cfg.method == Method::stork2) rkg2 = rkg2_coeffs(cfg.substeps);
  if (cfg.method == Method::stork4) rock4 = rock4_coeffs(cfg.substeps, cfg.strict_degree);

  SolveReport r;
  r.method = to_string(cfg.method);
  r.substage_mode = to_string(cfg.substage_mode);
  r.substeps_requested = cfg.substeps;
  r.substeps_used = rock4 ? rock4->substeps : cfg.substeps;
  if (cfg.record_trajectory) r.trajectory.assign(M + 1, Batch<>());
  Batch<> x = x_init;
  if (cfg.record_trajectory) r.trajectory[M] = x;
  BaselineMemory<double> memory;
  for (int i = M; i >= 1; --i) {
    const double t = grid.t(i), h = grid.h(i);
    double worst = 0;
    if (rkg2) {
      x = stork2_superstep<double>(x, t, h, *rkg2, nullptr, field, SubstageMode::exact, &r.nfe, &worst);
    } else if (rock4) {
      x = stork4_superstep<double>(x, t, h, *rock4, nullptr, field, SubstageMode::exact, &r.nfe, &worst,
                                   cfg.literal_finishing);
    } else {
      x = baseline_step<double>(cfg.method, x, t, h, field, &r.nfe, &memory);
      worst = detail::max_abs(x);
    }
    r.per_step.push_back({i, worst});
    if (cfg.record_trajectory) r.trajectory[i - 1] = x;
  }
  r.final_state = std::move(x);
  return r;
}

/// (x - sigma(t) eps(x, t)) / alpha_bar(t); counts one evaluation.
inline Batch<> tweedie_finish(const Batch<>& x, double t_floor, const SemiLinearNoiseModel& model, int* nfe = nullptr) {
  const double alpha = model.alpha_bar(t_floor);
  if (alpha == 0) throw ConfigError("tweedie: alpha_bar(t_floor) is 0");
  if (nfe) ++*nfe;
  return (x - model.sigma(t_floor) * model.eps(x, t_floor)) / alpha;
}

/// Noise-model STORK-4 on a uniform grid from t_M down to the floor t_0 > 0,
/// then the Tweedie map when cfg.tweedie is set.
inline SolveReport solve_noise(const Batch<>& x_init, const TimeGrid& grid, const SemiLinearNoiseModel& model,
                               const SolverConfig& cfg) {
  grid.validate();
  detail::check_state(x_init, model.dim);
  if (cfg.method != Method::stork4_noise && cfg.method != Method::stork4)
    throw ConfigError("solve_noise: method must be stork4_noise");

  if (cfg.substage_mode == SubstageMode::taylor) {
    NoiseScheduler sched(grid, cfg, model, x_init);
    while (!sched.done()) sched.step(model.eps(sched.query_state(), sched.next_query_time()));
    return sched.report();
  }

  NoiseScheduler::validate_noise_grid(grid, model, cfg.tweedie);
  const Rock4Coefficients k = rock4_coeffs(cfg.substeps, cfg.strict_degree);
  const std::vector<double>& c = cfg.literal_finishing ? k.c_literal : k.c;
  NoiseScheduler::validate_stage_times(grid, model, c);
  const int M = grid.M();
  SolveReport r;
  r.method = to_string(cfg.method);
  r.substage_mode = to_string(cfg.substage_mode);
  r.substeps_requested = cfg.substeps;
  r.substeps_used = k.substeps;
  if (cfg.record_trajectory) r.trajectory.assign(M + 1, Batch<>());
  Batch<> x = x_init;
  if (cfg.record_trajectory) r.trajectory[M] = x;
  for (int i = M; i >= 1; --i) {
    const double t = grid.t(i), h = grid.h(i);
    ++r.nfe;
    const Batch<> v0 = model.assemble(model.eps(x, t), x, t);
    auto stage = [&](int j, const Batch<>& y) {
      ++r.nfe;
      const double tj = t - h * c[j];
      return model.assemble(model.eps(y, tj), y, tj);
    };
    double worst = 0;
    x = rock4_stages(x, h, k, v0, stage, cfg.literal_finishing, &worst);
    r.per_step.push_back({i, worst});
    if (cfg.record_trajectory) r.trajectory[i - 1] = x;
  }
  r.final_state = cfg.tweedie ? tweedie_finish(x, grid.t(0), model, &r.nfe) : x;
  return r;
}

}  // namespace stork
