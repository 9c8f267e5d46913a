// Classifier-free guidance on Gaussian velocity fields: STORK-4 with
// second-order Taylor stages against an RK4 reference at equal and at
// much higher cost.

#include <cstdio>

#include "stork/stork.hpp"

int main() {
  stork::Vector mu(2);
  mu << 2.0, 0.0;
  const auto cond = stork::make_gaussian_flow(mu, 0.5);
  const auto uncond = stork::make_gaussian_flow(stork::Vector::Zero(2), 1.0);
  const double scale = 4.5;
  const auto guided = stork::guided_field(stork::GuidedField<stork::VelocityField<>>{cond.field, uncond.field, scale});

  stork::VelocityField<> reversed;
  reversed.dim = 2;
  reversed.eval = [guided](const stork::Batch<>& x, double s) -> stork::Batch<> { return -guided(x, 1.0 - s); };

  stork::Batch<> x0(2, 3);
  x0 << 0.5, -0.2, 1.0, -0.7, 0.1, 0.4;
  const stork::Batch<> reference = stork::rk4_reference(reversed, x0, 1.0, 0.0, 20000);

  std::printf("%6s %10s %12s %12s\n", "nfe", "method", "error", "nfe_used");
  for (int budget : {10, 20, 40}) {
    stork::SolverConfig cfg;
    cfg.method = stork::Method::stork4;
    cfg.substeps = 9;
    cfg.taylor_order = 2;  // guided use
    const int M = budget - 1;
    const auto r = stork::solve_flow(x0, stork::TimeGrid::flow_shift(M, 3.0, 0.0, 1.0), reversed, cfg);
    std::printf("%6d %10s %12.3e %12d\n", budget, "stork4", (r.final_state - reference).cwiseAbs().maxCoeff(), r.nfe);

    stork::SolverConfig base;
    base.method = stork::Method::rk4;
    const auto b = stork::solve_flow(x0, stork::TimeGrid::flow_shift(budget / 4, 3.0, 0.0, 1.0), reversed, base);
    std::printf("%6d %10s %12.3e %12d\n", budget, "rk4", (b.final_state - reference).cwiseAbs().maxCoeff(), b.nfe);
  }
  return 0;
}
