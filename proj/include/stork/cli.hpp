#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stork/analysis.hpp"
#include "stork/parallel.hpp"
#include "stork/report_io.hpp"
#include "stork/solve.hpp"

namespace stork::cli {

struct ProblemSpec {
  std::string name = "linear-system";
  double lambda = -20;                 ///< stiff-scalar
  std::string matrix = "-1,0;0,-100";  ///< linear-system, rows separated by ';'
  std::vector<double> mu{2, 0};        ///< gaussian-vp mu0 / gaussian-flow mu1
  double scale = 0.5;                  ///< gaussian-vp s0 / gaussian-flow s1
  double guidance = 1;                 ///< gaussian-flow guidance scale against the zero-mean field
  double t_lo = NAN, t_hi = NAN;       ///< NaN selects the problem default
  std::vector<double> x0;              ///< empty selects the problem default
  int batch = 1;
};

struct GridSpec {
  int steps = 0;  ///< 0 derives M from nfe, else 20
  int nfe = 0;
  std::string schedule = "uniform";
  double shift = kDefaultFlowShift;
  double epsilon_floor = 1e-3;
};

struct SolverSpec {
  std::string method = "stork4";
  int substeps = 9;
  int taylor_order = 3;
  std::string mode = "taylor";
  bool strict_degree = false;
  bool literal_finishing = false;
  bool tweedie = true;
};

struct RunConfig {
  std::string command;
  ProblemSpec problem;
  GridSpec grid;
  SolverSpec solver;
  std::string output;  ///< empty: <dir>/<command>.<format>, dir from STORK_OUTPUT_DIR or "."
  std::string format = "csv";
  std::uint64_t seed = 0;
  int workers = 0;
  StabilityBounds bounds{-80, 5, -20, 20};
  int nx = 600, ny = 600;
  std::string study = "order";
  std::vector<int> step_counts{10, 20, 40, 80};
  std::vector<std::string> methods{"euler", "stork2", "stork4"};
  std::vector<int> nfe_budgets{10, 20, 30, 40, 50};
};

inline constexpr char kOutputDirEnv[] = "STORK_OUTPUT_DIR";

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"solve", "demo-stiff", "stability", "convergence", "sweep", "dump-coeffs"};
  return c;
}

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> p{"stiff-scalar", "linear-system", "rotation", "gaussian-vp", "gaussian-flow"};
  return p;
}

namespace detail {

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

inline Matrix parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream all(text);
  std::string row;
  while (std::getline(all, row, ';')) {
    std::vector<double> r;
    std::stringstream rs(row);
    std::string cell;
    while (std::getline(rs, cell, ',')) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("matrix: cannot parse '" + cell + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("matrix: empty");
  Matrix A(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw ConfigError("matrix: must be square, row " + std::to_string(i) + " has " +
                                                         std::to_string(rows[i].size()) + " entries");
    for (std::size_t j = 0; j < rows.size(); ++j) A(i, j) = rows[i][j];
  }
  return A;
}

inline Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), v.size()); }

inline std::vector<double> column(const Batch<>& x, int j) {
  std::vector<double> out(x.rows());
  for (int i = 0; i < x.rows(); ++i) out[i] = x(i, j);
  return out;
}

inline nlohmann::json batch_json(const Batch<>& x) {
  nlohmann::json cols = nlohmann::json::array();
  for (int j = 0; j < x.cols(); ++j) cols.push_back(column(x, j));
  return cols;
}

inline std::string num(double v) { return format_number(v); }

}  // namespace detail

/// A problem in the solver convention plus what the CLI needs to report on it.
struct PreparedProblem {
  AnalyticProblem problem;  ///< solver convention: start at t_hi, finish at t_lo
  bool reversed = false;    ///< user time is t_lo + t_hi - s
  double t_lo = 0, t_hi = 1;
  Batch<> x0;

  double user_time(double s) const { return reversed ? t_lo + t_hi - s : s; }
  bool is_noise() const { return problem.kind == AnalyticProblem::Kind::noise; }
};

/// Fills problem defaults in place so the echoed config is fully resolved.
inline void resolve_problem_defaults(ProblemSpec& p, const GridSpec& g) {
  if (!detail::contains(problem_names(), p.name))
    throw ConfigError("unknown problem '" + p.name + "' (expected one of: " + detail::join(problem_names()) + ")");
  if (std::isnan(p.t_lo)) p.t_lo = p.name == "gaussian-vp" ? g.epsilon_floor : 0.0;
  if (std::isnan(p.t_hi)) p.t_hi = p.name == "gaussian-vp" ? 0.99 : 1.0;
  if (!(p.t_hi > p.t_lo)) throw ConfigError("problem interval: t_hi must exceed t_lo");
  if (p.batch < 1) throw ConfigError("batch must be >= 1");
  if (p.name == "gaussian-vp" && p.t_lo != g.epsilon_floor)
    throw ConfigError("gaussian-vp: t_lo must equal epsilon_floor");
  if (p.name == "gaussian-vp" && !(p.t_hi < 1)) throw ConfigError("gaussian-vp: t_hi must be < 1");
  if (p.guidance < 0) throw ConfigError("guidance scale must be >= 0");
  if (p.guidance != 1 && p.name != "gaussian-flow") throw ConfigError("guidance is only available for gaussian-flow");
}

inline PreparedProblem prepare_problem(const ProblemSpec& spec, std::uint64_t seed) {
  PreparedProblem out;
  out.t_lo = spec.t_lo;
  out.t_hi = spec.t_hi;
  AnalyticProblem forward;
  Vector default_x0;
  bool draw = false;
  if (spec.name == "stiff-scalar") {
    forward = make_stiff_scalar(spec.lambda);
    default_x0 = Vector::Ones(1);
  } else if (spec.name == "linear-system") {
    forward = make_linear_system(detail::parse_matrix(spec.matrix));
    default_x0 = Vector::Ones(forward.dim());
  } else if (spec.name == "rotation") {
    Matrix A(2, 2);
    A << 0, -1, 1, 0;
    forward = make_linear_system(A);
    forward.name = "rotation";
    default_x0 = Vector::Unit(2, 0);
  } else if (spec.name == "gaussian-flow") {
    const Vector mu = detail::to_vector(spec.mu);
    forward = make_gaussian_flow(mu, spec.scale);
    if (spec.guidance != 1) {
      const AnalyticProblem uncond = make_gaussian_flow(Vector::Zero(mu.size()), spec.scale);
      GuidedField<VelocityField<>> g{forward.field, uncond.field, spec.guidance};
      forward.field = guided_field(std::move(g));
      auto field = forward.field;
      // The guided field has no closed form; a fine RK4 integration stands in.
      forward.oracle = [field](const Batch<>& x, double t0, double t1) {
        return rk4_reference(field, x, t0, t1, 10000);
      };
    }
    draw = true;
  } else {
    out.problem = make_gaussian_vp(detail::to_vector(spec.mu), spec.scale);
    draw = true;
  }

  const int dim = out.problem.dim() > 0 ? out.problem.dim() : forward.dim();
  if (!spec.x0.empty() && static_cast<int>(spec.x0.size()) != dim)
    throw ConfigError("x0 has " + std::to_string(spec.x0.size()) + " entries, problem dimension is " +
                      std::to_string(dim));
  out.x0.resize(dim, spec.batch);
  if (!spec.x0.empty()) {
    out.x0.colwise() = detail::to_vector(spec.x0);
  } else if (draw) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int j = 0; j < spec.batch; ++j)
      for (int i = 0; i < dim; ++i) out.x0(i, j) = normal(rng);
    if (spec.name == "gaussian-vp") {
      // Marginal at t_hi: N(alpha mu0, alpha^2 s0^2 + sigma^2).
      const double a = VpSchedule::alpha(spec.t_hi), s = VpSchedule::sigma(spec.t_hi);
      out.x0 = (std::sqrt(a * a * spec.scale * spec.scale + s * s) * out.x0).colwise() +
               a * detail::to_vector(spec.mu);
    }
  } else {
    out.x0.colwise() = default_x0;
  }
  if (spec.name != "gaussian-vp") {
    out.problem = time_reversed(forward, spec.t_lo, spec.t_hi);
    out.reversed = true;
  }
  return out;
}

inline SolverConfig solver_config(const SolverSpec& s) {
  SolverConfig c;
  c.method = parse_method(s.method);
  c.substeps = s.substeps;
  if (s.taylor_order != 2 && s.taylor_order != 3) throw ConfigError("taylor order must be 2 or 3");
  c.taylor_order = s.taylor_order;
  c.substage_mode = parse_substage_mode(s.mode);
  c.strict_degree = s.strict_degree;
  c.literal_finishing = s.literal_finishing;
  c.tweedie = s.tweedie;
  return c;
}

/// Validates coefficient availability for STORK methods before any solve.
inline void check_coefficients(const SolverConfig& c) {
  if (c.method == Method::stork2) (void)rkg2_coeffs(c.substeps);
  if (c.method == Method::stork4 || c.method == Method::stork4_noise) (void)rock4_coeffs(c.substeps, c.strict_degree);
}

/// Super-steps M that spend a budget of B real evaluations.
inline int steps_for_budget(const SolverConfig& c, int budget, bool noise) {
  if (budget < 1) throw ConfigError("nfe budget must be >= 1");
  int M = 0;
  if (is_stork(c.method) && c.substage_mode == SubstageMode::taylor) {
    M = noise ? budget - 3 : budget - 1;
  } else if (is_stork(c.method)) {
    const int s = c.method == Method::stork2 ? c.substeps : rock4_coeffs(c.substeps, c.strict_degree).substeps;
    M = budget / s;
  } else {
    M = budget / evaluations_per_step(c.method, c.substeps, c.substage_mode);
  }
  if (M < 1) throw ConfigError("nfe budget " + std::to_string(budget) + " is too small for " + to_string(c.method));
  return M;
}

inline TimeGrid make_grid(const GridSpec& g, int M, const PreparedProblem& p) {
  if (p.is_noise()) {
    if (g.schedule != "uniform") throw ConfigError("noise problems need the uniform schedule");
    return TimeGrid::noise(M, g.epsilon_floor, p.t_hi);
  }
  if (g.schedule == "uniform") return TimeGrid::uniform(M, p.t_lo, p.t_hi);
  if (g.schedule == "flow_shift") return TimeGrid::flow_shift(M, g.shift, p.t_lo, p.t_hi);
  throw ConfigError("unknown schedule '" + g.schedule + "' (expected uniform or flow_shift)");
}

inline SolveReport run_solver(const PreparedProblem& p, const TimeGrid& grid, const SolverConfig& cfg) {
  if (p.is_noise() && is_stork(cfg.method) && cfg.method != Method::stork2) {
    SolverConfig c = cfg;
    c.method = Method::stork4_noise;
    return solve_noise(p.x0, grid, p.problem.noise, c);
  }
  if (cfg.method == Method::stork4_noise) throw ConfigError("stork4_noise needs the gaussian-vp problem");
  return solve_flow(p.x0, grid, p.problem.field, cfg);
}

/// Fills defaults and rejects bad names or bounds before any computation.
inline void resolve(RunConfig& rc) {
  if (!detail::contains(commands(), rc.command))
    throw ConfigError("unknown command '" + rc.command + "' (expected one of: " + detail::join(commands()) + ")");
  if (rc.format != "csv" && rc.format != "json") throw ConfigError("unknown format '" + rc.format + "'");
  if (rc.workers < 0) throw ConfigError("workers must be >= 0");
  if (rc.command == "solve" || rc.command == "convergence" || rc.command == "sweep") {
    resolve_problem_defaults(rc.problem, rc.grid);
    if (rc.grid.schedule != "uniform" && rc.grid.schedule != "flow_shift")
      throw ConfigError("unknown schedule '" + rc.grid.schedule + "' (expected uniform or flow_shift)");
  }
  if (rc.command == "solve" || rc.command == "convergence" || rc.command == "stability" ||
      rc.command == "dump-coeffs")
    check_coefficients(solver_config(rc.solver));
  if (rc.command == "solve") {
    if (rc.grid.steps < 0 || rc.grid.nfe < 0) throw ConfigError("steps and nfe must be >= 0");
    if (rc.grid.steps == 0) {
      rc.grid.steps = rc.grid.nfe > 0 ? steps_for_budget(solver_config(rc.solver), rc.grid.nfe,
                                                         rc.problem.name == "gaussian-vp")
                                      : 20;
    }
  }
  if (rc.command == "stability") {
    if (rc.nx < 2 || rc.ny < 2) throw ConfigError("stability: resolution must be >= 2 per axis");
    if (!(rc.bounds.re_max > rc.bounds.re_min) || !(rc.bounds.im_max > rc.bounds.im_min))
      throw ConfigError("stability: bounds must satisfy min < max");
    if (parse_method(rc.solver.method) == Method::ab2) throw ConfigError("stability: ab2 has no one-step polynomial");
  }
  if (rc.command == "dump-coeffs") {
    const Method m = parse_method(rc.solver.method);
    if (m != Method::stork2 && m != Method::stork4) throw ConfigError("dump-coeffs: method must be stork2 or stork4");
  }
  if (rc.command == "sweep") {
    if (rc.methods.empty() || rc.nfe_budgets.empty()) throw ConfigError("sweep: methods and nfe lists must be non-empty");
    for (const auto& m : rc.methods) {
      SolverSpec s = rc.solver;
      s.method = m;
      check_coefficients(solver_config(s));
    }
    for (int b : rc.nfe_budgets)
      if (b < 1) throw ConfigError("sweep: nfe budgets must be >= 1");
  }
  if (rc.command == "convergence") {
    if (rc.study != "order" && rc.study != "taylor-gap") throw ConfigError("unknown study '" + rc.study + "'");
    stork::detail::check_step_counts(rc.step_counts);
    if (rc.study == "taylor-gap" && !is_stork(parse_method(rc.solver.method)))
      throw ConfigError("taylor-gap study needs a STORK method");
  }
}

/// The resolved config as echoed in every output header. Output location and
/// worker count are excluded: they do not affect results.
inline nlohmann::json to_json(const RunConfig& rc) {
  using nlohmann::json;
  json j = {{"command", rc.command}, {"seed", rc.seed}};
  const auto& p = rc.problem;
  const auto& s = rc.solver;
  const json solver = {{"method", s.method},
                       {"substeps", s.substeps},
                       {"taylor_order", s.taylor_order},
                       {"substage_mode", s.mode},
                       {"strict_degree", s.strict_degree},
                       {"literal_finishing", s.literal_finishing},
                       {"tweedie", s.tweedie}};
  const json problem = {{"name", p.name},   {"lambda", p.lambda}, {"matrix", p.matrix}, {"mu", p.mu},
                        {"scale", p.scale}, {"guidance", p.guidance}, {"t_lo", p.t_lo}, {"t_hi", p.t_hi},
                        {"x0", p.x0},       {"batch", p.batch}};
  const json grid = {{"steps", rc.grid.steps},
                     {"nfe", rc.grid.nfe},
                     {"schedule", rc.grid.schedule},
                     {"shift", rc.grid.shift},
                     {"epsilon_floor", rc.grid.epsilon_floor}};
  if (rc.command == "solve") {
    j["problem"] = problem;
    j["grid"] = grid;
    j["solver"] = solver;
  } else if (rc.command == "stability") {
    j["solver"] = {{"method", s.method}, {"substeps", s.substeps}};
    j["bounds"] = {{"re_min", rc.bounds.re_min},
                   {"re_max", rc.bounds.re_max},
                   {"im_min", rc.bounds.im_min},
                   {"im_max", rc.bounds.im_max}};
    j["resolution"] = {rc.nx, rc.ny};
  } else if (rc.command == "convergence") {
    j["problem"] = problem;
    j["solver"] = solver;
    j["study"] = rc.study;
    j["step_counts"] = rc.step_counts;
  } else if (rc.command == "sweep") {
    j["problem"] = problem;
    j["grid"] = grid;
    j["solver"] = solver;
    j["methods"] = rc.methods;
    j["nfe_budgets"] = rc.nfe_budgets;
  } else if (rc.command == "dump-coeffs") {
    j["solver"] = {{"method", s.method}, {"substeps", s.substeps}, {"strict_degree", s.strict_degree}};
  }
  return j;
}

/// A command's result in both serializations.
struct CommandOutput {
  Table table;
  nlohmann::json summary;
};

namespace detail {

inline double endpoint_error(const PreparedProblem& p, const SolveReport& r, const TimeGrid& grid) {
  const Batch<>& end = r.trajectory.empty() ? r.final_state : r.trajectory.front();
  const Batch<> truth = p.problem.oracle(p.x0, grid.t(grid.M()), grid.t(0));
  return stork::detail::max_norm_error(end, truth);
}

}  // namespace detail

inline CommandOutput run_solve(const RunConfig& rc) {
  const PreparedProblem p = prepare_problem(rc.problem, rc.seed);
  const SolverConfig cfg = solver_config(rc.solver);
  const TimeGrid grid = make_grid(rc.grid, rc.grid.steps, p);
  const SolveReport r = run_solver(p, grid, cfg);
  const int d = p.problem.dim();
  CommandOutput out;
  out.table.columns = {"index", "t", "member"};
  for (int i = 0; i < d; ++i) out.table.columns.push_back("x" + std::to_string(i));
  out.table.columns.push_back("error");
  for (int i = grid.M(); i >= 0; --i) {
    const Batch<> truth = p.problem.oracle(p.x0, grid.t(grid.M()), grid.t(i));
    for (int m = 0; m < p.x0.cols(); ++m) {
      std::vector<std::string> row{std::to_string(i), detail::num(p.user_time(grid.t(i))), std::to_string(m)};
      double err = 0;
      for (int c = 0; c < d; ++c) {
        row.push_back(detail::num(r.trajectory[i](c, m)));
        err = std::max(err, std::abs(r.trajectory[i](c, m) - truth(c, m)));
      }
      row.push_back(detail::num(r.trajectory[i].col(m).allFinite() ? err : NAN));
      out.table.add(std::move(row));
    }
  }
  std::vector<double> times;
  for (int i = grid.M(); i >= 0; --i) times.push_back(p.user_time(grid.t(i)));
  out.summary = {{"method", r.method},
                 {"substage_mode", r.substage_mode},
                 {"substeps_requested", r.substeps_requested},
                 {"substeps_used", r.substeps_used},
                 {"steps", grid.M()},
                 {"nfe", r.nfe},
                 {"times", times},
                 {"initial_state", detail::batch_json(p.x0)},
                 {"final_state", detail::batch_json(r.final_state)},
                 {"endpoint_error", detail::endpoint_error(p, r, grid)}};
  return out;
}

inline CommandOutput run_demo_stiff(const RunConfig&) {
  const StiffnessDemo demo = stiffness_demo();
  CommandOutput out;
  out.table.columns = {"t", "exact", "euler", "heun", "rkg2_s4"};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : demo.rows) {
    std::vector<std::string> cells;
    for (double v : r) cells.push_back(detail::num(v));
    out.table.add(std::move(cells));
    rows.push_back({{"t", r[0]}, {"exact", r[1]}, {"euler", r[2]}, {"heun", r[3]}, {"rkg2_s4", r[4]}});
  }
  out.summary = {{"lambda", StiffnessDemo::lambda},
                 {"steps", StiffnessDemo::steps},
                 {"rows", rows},
                 {"max_error", {{"euler", demo.max_error_euler},
                                {"heun", demo.max_error_heun},
                                {"rkg2_s4", demo.max_error_rkg2}}}};
  return out;
}

inline CommandOutput run_stability(const RunConfig& rc) {
  const Method m = parse_method(rc.solver.method);
  const StabilityScan scan = stability_region_scan(m, rc.solver.substeps, rc.bounds, rc.nx, rc.ny, rc.workers);
  CommandOutput out;
  out.table.columns = {"re", "im", "magnitude"};
  for (int iy = 0; iy < scan.ny; ++iy)
    for (int ix = 0; ix < scan.nx; ++ix)
      out.table.add({detail::num(scan.re(ix)), detail::num(scan.im(iy)),
                     detail::num(scan.magnitudes[static_cast<std::size_t>(iy) * scan.nx + ix])});
  out.summary = {{"method", scan.method},
                 {"substeps_used", scan.substeps},
                 {"nx", scan.nx},
                 {"ny", scan.ny},
                 {"inside_count", scan.inside_count},
                 {"inside_fraction", static_cast<double>(scan.inside_count) / (scan.nx * scan.ny)},
                 {"inside_area", scan.inside_area()},
                 {"real_extent", real_stability_extent(m, rc.solver.substeps)},
                 {"tolerance", kStabilityTolerance}};
  return out;
}

inline CommandOutput run_convergence(const RunConfig& rc) {
  const PreparedProblem p = prepare_problem(rc.problem, rc.seed);
  SolverConfig cfg = solver_config(rc.solver);
  if (p.is_noise() && is_stork(cfg.method)) cfg.method = Method::stork4_noise;
  const ConvergenceReport r = rc.study == "order" ? empirical_order(p.problem, cfg, rc.step_counts, p.x0, p.t_lo, p.t_hi)
                                                  : taylor_gap_order(p.problem, cfg, rc.step_counts, p.x0, p.t_lo, p.t_hi);
  CommandOutput out;
  out.table.columns = {"steps", "h", "error"};
  for (std::size_t i = 0; i < r.steps.size(); ++i)
    out.table.add({std::to_string(r.steps[i]), detail::num(r.h[i]), detail::num(r.errors[i])});
  out.summary = {{"study", rc.study},
                 {"steps", r.steps},
                 {"errors", r.errors},
                 {"fitted_order", r.fitted_order},
                 {"r_squared", r.r_squared},
                 {"flagged", r.flagged},
                 {"notes", r.notes}};
  return out;
}

struct SweepCell {
  std::string method;
  int budget = 0;
  int steps = 0;
  int nfe = 0;
  double error = NAN;
  std::string status = "ok";
};

/// One solve per (method, budget). Failures stay inside their cell.
inline std::vector<SweepCell> sweep_cells(const RunConfig& rc) {
  const PreparedProblem p = prepare_problem(rc.problem, rc.seed);
  const int nm = static_cast<int>(rc.methods.size()), nb = static_cast<int>(rc.nfe_budgets.size());
  std::vector<SweepCell> cells(static_cast<std::size_t>(nm) * nb);
  parallel_for(
      nm * nb,
      [&](int k) {
        SweepCell& c = cells[k];
        c.method = rc.methods[k / nb];
        c.budget = rc.nfe_budgets[k % nb];
        try {
          SolverSpec spec = rc.solver;
          spec.method = c.method;
          SolverConfig cfg = solver_config(spec);
          cfg.record_trajectory = true;
          cfg.tweedie = false;
          c.steps = steps_for_budget(cfg, c.budget, p.is_noise() && is_stork(cfg.method));
          const TimeGrid grid = make_grid(rc.grid, c.steps, p);
          const SolveReport r = run_solver(p, grid, cfg);
          c.nfe = r.nfe;
          c.error = detail::endpoint_error(p, r, grid);
          if (!std::isfinite(c.error)) c.status = "non-finite";
        } catch (const std::exception& e) {
          c.error = NAN;
          c.status = std::string("error: ") + e.what();
        }
      },
      rc.workers);
  return cells;
}

inline CommandOutput run_sweep(const RunConfig& rc) {
  const std::vector<SweepCell> cells = sweep_cells(rc);
  CommandOutput out;
  out.table.columns = {"method", "nfe", "steps", "nfe_used", "error", "status"};
  nlohmann::json table = nlohmann::json::object();
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : cells) {
    out.table.add({c.method, std::to_string(c.budget), std::to_string(c.steps), std::to_string(c.nfe),
                   detail::num(c.error), c.status});
    table[c.method][std::to_string(c.budget)] = std::isfinite(c.error) ? nlohmann::json(c.error) : nlohmann::json();
    list.push_back({{"method", c.method},
                    {"nfe", c.budget},
                    {"steps", c.steps},
                    {"nfe_used", c.nfe},
                    {"error", std::isfinite(c.error) ? nlohmann::json(c.error) : nlohmann::json()},
                    {"status", c.status}});
  }
  out.summary = {{"metric", "endpoint max-norm error vs oracle"}, {"table", table}, {"cells", list}};
  return out;
}

inline CommandOutput run_dump_coeffs(const RunConfig& rc) {
  CommandOutput out;
  out.table.columns = {"name", "index", "value"};
  nlohmann::json j;
  auto scalar = [&](const std::string& name, double v) {
    out.table.add({name, "", detail::num(v)});
    j[name] = v;
  };
  auto series = [&](const std::string& name, const auto& v, int first, int last) {
    nlohmann::json arr = nlohmann::json::object();
    for (int i = first; i <= last; ++i) {
      out.table.add({name, std::to_string(i), detail::num(v[i])});
      arr[std::to_string(i)] = v[i];
    }
    j[name] = arr;
  };
  if (parse_method(rc.solver.method) == Method::stork2) {
    const Rkg2Coefficients k = rkg2_coeffs(rc.solver.substeps);
    const int s = k.substeps;
    scalar("substeps", s);
    scalar("w1", k.w1);
    series("a", k.a, 0, s);
    series("b", k.b, 0, s);
    series("mu", k.mu, 2, s);
    series("nu", k.nu, 2, s);
    series("mu_tilde", k.mu_tilde, 1, s);
    series("gamma_tilde", k.gamma_tilde, 2, s);
    series("c", k.c, 0, s);
  } else {
    const Rock4Coefficients k = rock4_coeffs(rc.solver.substeps, rc.solver.strict_degree);
    const int n = k.recurrence_stages();
    scalar("substeps_requested", k.requested);
    scalar("substeps", k.substeps);
    scalar("stability_extent", k.stability_extent);
    scalar("scale", k.scale);
    series("mu", k.mu, 1, n);
    series("kappa", k.kappa, 2, n);
    series("nu", k.nu, 2, n);
    static const char* names[] = {"a21", "a31", "a32", "a41", "a42", "a43"};
    for (int i = 0; i < 6; ++i) scalar(names[i], k.a[i]);
    series("b", k.b, 0, 3);
    series("literal_mu", k.literal_mu, 0, 3);
    series("w4", k.w4, 0, 4);
    series("c", k.c, 0, k.substeps);
    series("c_literal", k.c_literal, 0, k.substeps);
    j["table_version"] = rock4_table_version();
  }
  out.summary = j;
  return out;
}

inline CommandOutput execute(const RunConfig& rc) {
  if (rc.command == "solve") return run_solve(rc);
  if (rc.command == "demo-stiff") return run_demo_stiff(rc);
  if (rc.command == "stability") return run_stability(rc);
  if (rc.command == "convergence") return run_convergence(rc);
  if (rc.command == "sweep") return run_sweep(rc);
  return run_dump_coeffs(rc);
}

inline std::filesystem::path output_path(const RunConfig& rc) {
  if (!rc.output.empty()) return rc.output;
  const char* dir = std::getenv(kOutputDirEnv);
  const std::filesystem::path base = dir && *dir ? dir : ".";
  return base / (rc.command + "." + rc.format);
}

/// Renders the output file content without touching the filesystem.
inline std::string render(const RunConfig& rc, const CommandOutput& out) {
  const OutputMeta meta{to_json(rc)};
  return rc.format == "csv" ? to_csv(out.table, meta) : to_json_document(out.summary, meta);
}

/// One line: {"error":"<kind>","message":"..."}.
inline std::string error_line(const std::string& kind, const std::string& message) {
  return nlohmann::json{{"error", kind}, {"message", message}}.dump();
}

/// Resolves, computes and writes atomically. Returns the process exit status:
/// 0 on success, 2 for configuration errors, 1 for other failures.
inline int run(RunConfig rc, std::ostream& err = std::cerr, std::filesystem::path* written = nullptr) {
  try {
    resolve(rc);
    const CommandOutput out = execute(rc);
    const std::filesystem::path path = output_path(rc);
    write_atomic(path, render(rc, out));
    if (written) *written = path;
    return 0;
  } catch (const ConfigError& e) {
    err << error_line("config", e.what()) << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << error_line("io", e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << error_line("runtime", e.what()) << "\n";
    return 1;
  }
}

/// Registers subcommands and options on `app`, bound to `rc`. Accepts a TOML
/// or INI config file with the same option names through --config.
inline void configure_app(CLI::App& app, RunConfig& rc) {
  app.set_config("--config", "", "read options from a TOML/INI file");
  app.require_subcommand(1);
  app.fallthrough();
  auto common = [&rc](CLI::App* sub) {
    sub->add_option("-o,--output", rc.output, "output file (default: $STORK_OUTPUT_DIR/<command>.<format>)");
    sub->add_option("--format", rc.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", rc.seed, "seed for batch initial states");
    sub->add_option("--workers", rc.workers, "worker threads (0 = hardware)");
  };
  auto problem = [&rc](CLI::App* sub) {
    sub->add_option("--problem", rc.problem.name, "stiff-scalar, linear-system, rotation, gaussian-vp, gaussian-flow");
    sub->add_option("--lambda", rc.problem.lambda, "stiff-scalar rate");
    sub->add_option("--matrix", rc.problem.matrix, "linear-system matrix, e.g. \"-1,0;0,-100\"");
    sub->add_option("--mu", rc.problem.mu, "gaussian mean")->delimiter(',');
    sub->add_option("--scale", rc.problem.scale, "gaussian standard deviation");
    sub->add_option("--guidance", rc.problem.guidance, "guidance scale (gaussian-flow)");
    sub->add_option("--t-lo", rc.problem.t_lo, "interval start");
    sub->add_option("--t-hi", rc.problem.t_hi, "interval end");
    sub->add_option("--x0", rc.problem.x0, "initial state")->delimiter(',');
    sub->add_option("--batch", rc.problem.batch, "batch size");
    sub->add_option("--epsilon-floor", rc.grid.epsilon_floor, "noise floor for gaussian-vp");
  };
  auto solver = [&rc](CLI::App* sub) {
    sub->add_option("--method", rc.solver.method, "euler, heun, rk4, ab2, stork2, stork4, stork4_noise");
    sub->add_option("--substeps", rc.solver.substeps, "STORK stage count s");
    sub->add_option("--taylor-order", rc.solver.taylor_order, "2 or 3");
    sub->add_option("--mode", rc.solver.mode, "taylor or exact");
    sub->add_flag("--strict-degree", rc.solver.strict_degree, "reject unsupported ROCK4 degrees");
    sub->add_flag("--literal-finishing", rc.solver.literal_finishing, "single-chain ROCK4 finishing");
    sub->add_flag("!--no-tweedie", rc.solver.tweedie, "skip the Tweedie map on noise solves");
  };
  auto grid = [&rc](CLI::App* sub) {
    sub->add_option("--schedule", rc.grid.schedule, "uniform or flow_shift");
    sub->add_option("--shift", rc.grid.shift, "flow-shift parameter");
  };

  auto* solve = app.add_subcommand("solve", "solve one problem and write the trajectory");
  common(solve), problem(solve), solver(solve), grid(solve);
  solve->add_option("--steps", rc.grid.steps, "super-steps M");
  solve->add_option("--nfe", rc.grid.nfe, "evaluation budget (sets M when --steps is absent)");

  auto* demo = app.add_subcommand("demo-stiff", "ten-step stiff scalar comparison");
  common(demo);

  auto* stab = app.add_subcommand("stability", "scan |R(z)| over a complex box");
  common(stab);
  stab->add_option("--method", rc.solver.method);
  stab->add_option("--substeps", rc.solver.substeps);
  stab->add_option("--re-min", rc.bounds.re_min);
  stab->add_option("--re-max", rc.bounds.re_max);
  stab->add_option("--im-min", rc.bounds.im_min);
  stab->add_option("--im-max", rc.bounds.im_max);
  stab->add_option("--nx", rc.nx);
  stab->add_option("--ny", rc.ny);

  auto* conv = app.add_subcommand("convergence", "endpoint error against step count");
  common(conv), problem(conv), solver(conv);
  conv->add_option("--study", rc.study, "order or taylor-gap");
  conv->add_option("--steps-list", rc.step_counts, "step counts")->delimiter(',');

  auto* sweep = app.add_subcommand("sweep", "methods x NFE budgets at equal cost");
  common(sweep), problem(sweep), solver(sweep), grid(sweep);
  sweep->add_option("--methods", rc.methods, "methods")->delimiter(',');
  sweep->add_option("--nfe", rc.nfe_budgets, "NFE budgets")->delimiter(',');

  auto* dump = app.add_subcommand("dump-coeffs", "write one degree's coefficients");
  common(dump);
  dump->add_option("--method", rc.solver.method, "stork2 or stork4");
  dump->add_option("--substeps", rc.solver.substeps);
  dump->add_flag("--strict-degree", rc.solver.strict_degree);

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; }))
    sub->callback([&rc, sub] { rc.command = sub->get_name(); });
}

/// Parses argv and runs. Parse failures use the same single-line error form.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Stabilized Runge-Kutta sampling toolkit"};
  RunConfig rc;
  configure_app(app, rc);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what()) << "\n";
    return 2;
  }
  std::filesystem::path written;
  const int status = run(rc, err, &written);
  if (status == 0) out << written.string() << "\n";
  return status;
}

}  // namespace stork::cli
