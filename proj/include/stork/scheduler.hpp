#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stork/stepper.hpp"

namespace stork {

/// Host-driven taylor-mode STORK-2/4 for flow fields. The host evaluates the
/// field at (query_state(), next_query_time()) and feeds the result to step();
/// the scheduler never evaluates a field itself. n + 1 outputs drive the
/// start-up, then one output per remaining super-step.
class FlowScheduler {
 public:
  FlowScheduler(TimeGrid grid, SolverConfig cfg, Batch<> x_init)
      : grid_(std::move(grid)), cfg_(cfg), cache_(cfg.taylor_order) {
    grid_.validate();
    if (cfg_.method != Method::stork2 && cfg_.method != Method::stork4)
      throw ConfigError("flow scheduler: method must be stork2 or stork4");
    if (cfg_.substage_mode != SubstageMode::taylor) throw ConfigError("flow scheduler: only taylor mode is host-driven");
    n_ = cfg_.taylor_order;
    const int M = grid_.M();
    if (M < n_ + 1)
      throw ConfigError("time grid: M = " + std::to_string(M) + " is below n + 1 = " + std::to_string(n_ + 1));
    if (x_init.size() == 0) throw ConfigError("flow scheduler: empty initial state");
    if (cfg_.method == Method::stork2) {
      rkg2_ = rkg2_coeffs(cfg_.substeps);
    } else {
      rock4_ = rock4_coeffs(cfg_.substeps, cfg_.strict_degree);
    }
    index_ = M;
    state_ = std::move(x_init);
    if (cfg_.record_trajectory) trajectory_.assign(M + 1, Batch<>());
    record(M, state_);
    query_state_ = state_;
    query_time_ = grid_.t(M);
  }

  bool done() const { return index_ == 0; }
  double next_query_time() const {
    require_pending();
    return query_time_;
  }
  const Batch<>& query_state() const {
    require_pending();
    return query_state_;
  }
  /// Sequence number of the next expected model output, starting at 0.
  int query_index() const { return queries_; }
  /// Grid index of the current state.
  int grid_index() const { return index_; }
  const Batch<>& state() const { return state_; }
  int nfe() const { return queries_; }
  int substeps_used() const { return rock4_ ? rock4_->substeps : cfg_.substeps; }

  /// Consumes the model output for query `query_index`; rejects out-of-order calls.
  void step(const Batch<>& model_output, int query_index) {
    if (query_index != queries_)
      throw ConfigError("scheduler: expected output for query " + std::to_string(queries_) + ", got " +
                        std::to_string(query_index));
    step(model_output);
  }

  void step(const Batch<>& model_output) {
    require_pending();
    if (model_output.rows() != query_state_.rows() || model_output.cols() != query_state_.cols())
      throw ConfigError("scheduler: model output shape does not match the state");
    const int M = grid_.M();
    const int q = queries_++;
    if (q == 0) {
      const double hM = grid_.h(M);
      v_prev_ = model_output;
      cache_.push(grid_.t(M), model_output);
      half_ = startup::half_step(state_, hM, model_output);
      set_query(half_, grid_.t(M) - 0.5 * hM);
      return;
    }
    if (q == 1) {
      const double hM = grid_.h(M);
      cache_.push(grid_.t(M) - 0.5 * hM, model_output);
      Batch<> next = startup::second_half(half_, hM, model_output, v_prev_);
      const double worst = std::max(detail::max_abs(half_), detail::max_abs(next));
      advance(std::move(next), worst);
      return;
    }
    if (q <= n_) {
      const int i = index_;
      cache_.push(grid_.t(i), model_output);
      Batch<> next = startup::adams_bashforth(state_, grid_.h(i), grid_.h(i + 1), model_output, v_prev_);
      v_prev_ = model_output;
      const double worst = detail::max_abs(next);
      advance(std::move(next), worst);
      return;
    }
    const int i = index_;
    const double t0 = grid_.t(i), h = grid_.h(i);
    cache_.push(t0, model_output);
    cache_.refresh();
    double worst = 0;
    Batch<> next;
    if (rkg2_) {
      next = rkg2_stages(state_, h, *rkg2_, model_output, TaylorStages<double>{&cache_, &rkg2_->c, h, n_}, &worst);
    } else {
      const auto& c = cfg_.literal_finishing ? rock4_->c_literal : rock4_->c;
      next = rock4_stages(state_, h, *rock4_, model_output, TaylorStages<double>{&cache_, &c, h, n_},
                          cfg_.literal_finishing, &worst);
    }
    advance(std::move(next), worst);
  }

  SolveReport report() const {
    SolveReport r;
    r.trajectory = trajectory_;
    r.nfe = queries_;
    r.per_step = per_step_;
    r.final_state = state_;
    r.substeps_requested = cfg_.substeps;
    r.substeps_used = substeps_used();
    r.method = to_string(cfg_.method);
    r.substage_mode = to_string(cfg_.substage_mode);
    return r;
  }

 private:
  void require_pending() const {
    if (done()) throw ConfigError("scheduler: solve already finished");
  }
  void set_query(const Batch<>& x, double t) {
    query_state_ = x;
    query_time_ = t;
  }
  void record(int i, const Batch<>& x) {
    if (cfg_.record_trajectory) trajectory_[i] = x;
  }
  void advance(Batch<> next, double worst) {
    per_step_.push_back({index_, worst});
    --index_;
    state_ = std::move(next);
    record(index_, state_);
    if (!done()) set_query(state_, grid_.t(index_));
  }

  TimeGrid grid_;
  SolverConfig cfg_;
  int n_ = 2;
  std::optional<Rkg2Coefficients> rkg2_;
  std::optional<Rock4Coefficients> rock4_;
  DerivativeCache<double> cache_;
  int index_ = 0;
  int queries_ = 0;
  Batch<> state_, half_, v_prev_, query_state_;
  double query_time_ = 0;
  std::vector<Batch<>> trajectory_;
  std::vector<StepDiagnostics> per_step_;
};

/// One noise-model STORK-4 super-step from (x, t_i) to t_i - h with the noise
/// expansion held in `cache` (anchor eps(x, t_i)). The right-hand side at each
/// stage is F(eps_approx, Y, t) = f(t) Y + g(t)^2 / (2 sigma(t)) eps_approx.
inline Batch<> stork4_noise_onestep(const Batch<>& x, double t_i, double h, const Rock4Coefficients& k,
                                    const DerivativeCache<double>& cache, int order,
                                    const SemiLinearNoiseModel& model, bool literal, double* max_stage) {
  const std::vector<double>& c = literal ? k.c_literal : k.c;
  const Batch<> v0 = model.assemble(cache.anchor_value(), x, t_i);
  auto stage = [&](int j, const Batch<>& y) {
    const double dt = -h * c[j];
    return model.assemble(taylor_eval(cache, order, dt), y, t_i + dt);
  };
  return rock4_stages(x, h, k, v0, stage, literal, max_stage);
}

/// Host-driven noise-model STORK-4 on a uniform grid ending at the noise floor
/// t_0 > 0. The host evaluates eps at (query_state(), next_query_time()).
/// Query order: x_M, the half step, the provisional x_{M-1}, then one per grid
/// point down to x_1, then x_0 for the Tweedie map when enabled.
class NoiseScheduler {
 public:
  NoiseScheduler(TimeGrid grid, SolverConfig cfg, SemiLinearNoiseModel schedule, Batch<> x_init)
      : grid_(std::move(grid)), cfg_(cfg), model_(std::move(schedule)) {
    grid_.validate();
    if (cfg_.method != Method::stork4_noise && cfg_.method != Method::stork4)
      throw ConfigError("noise scheduler: method must be stork4_noise");
    if (cfg_.substage_mode != SubstageMode::taylor) throw ConfigError("noise scheduler: only taylor mode is host-driven");
    if (cfg_.taylor_order != 2 && cfg_.taylor_order != 3) throw ConfigError("taylor order must be 2 or 3");
    validate_noise_grid(grid_, model_, cfg_.tweedie);
    if (x_init.size() == 0) throw ConfigError("noise scheduler: empty initial state");
    rock4_ = rock4_coeffs(cfg_.substeps, cfg_.strict_degree);
    validate_stage_times(grid_, model_, cfg_.literal_finishing ? rock4_.c_literal : rock4_.c);
    h_ = grid_.t(grid_.M()) - grid_.t(grid_.M() - 1);
    index_ = grid_.M();
    state_ = std::move(x_init);
    xM_ = state_;
    if (cfg_.record_trajectory) trajectory_.assign(grid_.M() + 1, Batch<>());
    record(index_, state_);
    query_state_ = state_;
    query_time_ = grid_.t(index_);
  }

  /// Grid and schedule checks shared with the exact-mode solver.
  static void validate_noise_grid(const TimeGrid& grid, const SemiLinearNoiseModel& m, bool tweedie) {
    if (!grid.is_uniform()) throw ConfigError("noise solve: grid must be uniform");
    const double floor = grid.t(0);
    if (!(floor > 0)) throw ConfigError("noise solve: epsilon_floor must be > 0");
    if (!(m.sigma(floor) > 0)) throw ConfigError("noise solve: sigma(epsilon_floor) must be > 0");
    if (tweedie && m.alpha_bar(floor) == 0) throw ConfigError("noise solve: alpha_bar(epsilon_floor) is 0");
  }

  /// Finishing stages can sit below t_0 (abscissae above 1); the schedule must
  /// stay finite there.
  static void validate_stage_times(const TimeGrid& grid, const SemiLinearNoiseModel& m, const std::vector<double>& c) {
    const double c_max = *std::max_element(c.begin(), c.end());
    const double t_low = grid.t(0) - grid.h(1) * std::max(0.0, c_max - 1.0);
    if (!std::isfinite(m.f(t_low)) || !std::isfinite(m.weight(t_low)))
      throw ConfigError("noise solve: schedule is not finite at the lowest stage time " + std::to_string(t_low) +
                        "; raise epsilon_floor or supply eps_weight");
  }

  bool done() const { return finished_; }
  double next_query_time() const {
    require_pending();
    return query_time_;
  }
  const Batch<>& query_state() const {
    require_pending();
    return query_state_;
  }
  int query_index() const { return queries_; }
  int grid_index() const { return index_; }
  const Batch<>& state() const { return state_; }
  int nfe() const { return queries_; }
  const Batch<>& final_state() const { return final_; }

  void step(const Batch<>& model_output, int query_index) {
    if (query_index != queries_)
      throw ConfigError("scheduler: expected output for query " + std::to_string(queries_) + ", got " +
                        std::to_string(query_index));
    step(model_output);
  }

  void step(const Batch<>& e) {
    require_pending();
    if (e.rows() != query_state_.rows() || e.cols() != query_state_.cols())
      throw ConfigError("scheduler: model output shape does not match the state");
    const int M = grid_.M();
    const int q = queries_++;
    const double h = h_, tM = grid_.t(M);
    if (q == 0) {
      eps_[M] = e;
      half_ = xM_ - Scalar(0.5 * h) * model_.assemble(e, xM_, tM);
      set_query(half_, tM - 0.5 * h);
      return;
    }
    if (q == 1) {
      eps_half_ = e;
      const Batch<> provisional = half_ - Scalar(0.75 * h) * model_.assemble(e, half_, tM - 0.5 * h) +
                                  Scalar(0.25 * h) * model_.assemble(eps_[M], xM_, tM);
      set_query(provisional, grid_.t(M - 1));
      return;
    }
    if (q == 2) {
      // Derivatives at t_M from samples at t_M, t_M - h/2, t_M - h.
      const Batch<>& eM = eps_[M];
      Derivatives<double> d;
      d.d1 = (3.0 * eM - 4.0 * eps_half_ + e) / h;
      d.d2 = (eM - 2.0 * eps_half_ + e) / (0.25 * h * h);
      run_step(M, std::move(d), 2);
      return;
    }
    if (index_ == 0) {
      // Tweedie: x_0 <- (x_0 - sigma eps) / alpha at the floor.
      const double t0 = grid_.t(0);
      final_ = (state_ - model_.sigma(t0) * e) / model_.alpha_bar(t0);
      finished_ = true;
      return;
    }
    const int i = index_;
    eps_[i] = e;
    Derivatives<double> d;
    int order = 2;
    if (i == M - 1 || i == M - 2) {
      const double dt = i == M - 1 ? 0.5 * h : h;
      const Batch<>& e1 = i == M - 1 ? eps_half_ : eps_[i + 1];
      const Batch<>& e2 = i == M - 1 ? eps_[M] : eps_[i + 2];
      d.d1 = (-3.0 * e + 4.0 * e1 - e2) / (2 * dt);
      d.d2 = (e - 2.0 * e1 + e2) / (dt * dt);
    } else {
      const std::vector<TimedValue<double>> samples = {
          {grid_.t(i), e}, {grid_.t(i + 1), eps_[i + 1]}, {grid_.t(i + 2), eps_[i + 2]}, {grid_.t(i + 3), eps_[i + 3]}};
      d = fd_derivatives_4pt_uniform(samples, h);
      order = cfg_.taylor_order;
      if (order == 2) d.d3.resize(0, 0);
    }
    eps_.erase(i + 3);
    run_step(i, std::move(d), order);
  }

  SolveReport report() const {
    SolveReport r;
    r.trajectory = trajectory_;
    r.nfe = queries_;
    r.per_step = per_step_;
    r.final_state = finished_ && cfg_.tweedie ? final_ : state_;
    r.substeps_requested = cfg_.substeps;
    r.substeps_used = rock4_.substeps;
    r.method = to_string(cfg_.method);
    r.substage_mode = to_string(cfg_.substage_mode);
    return r;
  }

 private:
  using Scalar = double;

  void require_pending() const {
    if (done()) throw ConfigError("scheduler: solve already finished");
  }
  void set_query(const Batch<>& x, double t) {
    query_state_ = x;
    query_time_ = t;
  }
  void record(int i, const Batch<>& x) {
    if (cfg_.record_trajectory) trajectory_[i] = x;
  }
  void run_step(int i, Derivatives<double> d, int order) {
    DerivativeCache<double> cache(order);
    cache.set(grid_.t(i), eps_[i], std::move(d));
    double worst = 0;
    Batch<> next = stork4_noise_onestep(state_, grid_.t(i), h_, rock4_, cache, order, model_,
                                        cfg_.literal_finishing, &worst);
    per_step_.push_back({i, worst});
    index_ = i - 1;
    state_ = std::move(next);
    record(index_, state_);
    if (index_ > 0 || cfg_.tweedie) set_query(state_, grid_.t(index_));
    else finished_ = true;
  }

  TimeGrid grid_;
  SolverConfig cfg_;
  SemiLinearNoiseModel model_;
  Rock4Coefficients rock4_;
  double h_ = 0;
  int index_ = 0;
  int queries_ = 0;
  bool finished_ = false;
  Batch<> state_, xM_, half_, eps_half_, query_state_, final_;
  std::map<int, Batch<>> eps_;
  double query_time_ = 0;
  std::vector<Batch<>> trajectory_;
  std::vector<StepDiagnostics> per_step_;
};

}  // namespace stork
