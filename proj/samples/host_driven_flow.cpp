// Drives taylor-mode STORK-4 from the host side, as a Python or GPU caller
// would: the solver only hands out query points and consumes model outputs.

#include <cstdio>
#include <vector>

#include "stork/stork.hpp"

namespace {

// Stand-in for an external model with a row-major float interface.
struct ExternalModel {
  stork::AnalyticProblem truth;

  std::vector<float> predict(const std::vector<float>& rows, int batch, int dim, double t) const {
    stork::Batch<> x(dim, batch);
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < dim; ++i) x(i, b) = rows[static_cast<std::size_t>(b) * dim + i];
    const stork::Batch<> v = truth.field(x, t);
    std::vector<float> out(rows.size());
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < dim; ++i) out[static_cast<std::size_t>(b) * dim + i] = static_cast<float>(v(i, b));
    return out;
  }
  int calls = 0;
};

}  // namespace

int main() {
  const int dim = 2, batch = 4, M = 20;
  stork::Vector mu(dim);
  mu << 2.0, -1.0;
  // Noise at t = 0, data at t = 1; the solver runs from index M down to 0.
  const stork::AnalyticProblem forward = stork::make_gaussian_flow(mu, 0.5);
  ExternalModel model{stork::time_reversed(forward, 0.0, 1.0)};

  stork::Batch<> x0(dim, batch);
  x0 << 0.3, -1.1, 0.8, 0.0, 1.4, 0.2, -0.5, 0.9;

  stork::SolverConfig cfg;
  cfg.method = stork::Method::stork4;
  cfg.substeps = 9;
  cfg.taylor_order = 3;
  stork::FlowScheduler sched(stork::TimeGrid::flow_shift(M, stork::kDefaultFlowShift, 0.0, 1.0), cfg, x0);

  std::vector<float> rows(static_cast<std::size_t>(dim) * batch);
  while (!sched.done()) {
    const stork::Batch<>& q = sched.query_state();
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < dim; ++i) rows[static_cast<std::size_t>(b) * dim + i] = static_cast<float>(q(i, b));
    const std::vector<float> out = model.predict(rows, batch, dim, sched.next_query_time());
    ++model.calls;
    stork::Batch<> v(dim, batch);
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < dim; ++i) v(i, b) = out[static_cast<std::size_t>(b) * dim + i];
    sched.step(v, sched.query_index());
  }

  const stork::Batch<> exact = forward.oracle(x0, 0.0, 1.0);
  const double err = (sched.state() - exact).cwiseAbs().maxCoeff();
  std::printf("model calls: %d (M + 1 = %d)\n", model.calls, M + 1);
  std::printf("max error vs oracle (float32 model): %.3e\n", err);
  for (int b = 0; b < batch; ++b)
    std::printf("sample %d: (% .5f, % .5f)  exact (% .5f, % .5f)\n", b, sched.state()(0, b), sched.state()(1, b),
                exact(0, b), exact(1, b));
  return err < 5e-2 ? 0 : 1;
}
