#include <doctest.h>

#include <cmath>

#include "minisns/experiments.hpp"
#include "minisns/integrator.hpp"

using namespace minisns;

namespace {

std::shared_ptr<const OperatorSet> make_ops(int level, std::shared_ptr<const NoiseModel> noise) {
  Mesh m = build_structured_square(1);
  for (int l = 0; l < level; ++l) m = refine_uniform(m);
  auto mesh = std::make_shared<Mesh>(std::move(m));
  return std::make_shared<OperatorSet>(assemble(mesh, build_dofmap(*mesh), noise));
}

Eigen::VectorXd vortex_dual(const OperatorSet& ops, double amplitude = 1.0) {
  return assemble_load(ops, [amplitude](const Eigen::Vector2d& p) {
    return (amplitude * builtin_field("vortex", p)).eval();
  });
}

}  // namespace

TEST_CASE("zero initial state stays zero under any noise") {
  auto noise = std::make_shared<NoiseModel>(builtin_noise_family("default4", 0.2, 4));
  auto ops = make_ops(2, noise);
  Stepper stepper(ops, 0.01);
  BrownianDriver path = sample_path(5, 0, 16, 0.01, 4);
  Eigen::VectorXd zero_dual = Eigen::VectorXd::Zero(ops->n_constrained());
  Trajectory traj = simulate(stepper, zero_dual, path, 0);
  for (const auto& row : traj.norms) {
    CHECK(row.l2_norm == 0.0);
    CHECK(row.energy_residual == 0.0);
  }
}

TEST_CASE("implicit Euler for the Stokes part is a strict contraction") {
  auto ops = make_ops(3, nullptr);
  SimFlags flags;
  flags.nonlinearity = false;
  flags.noise = false;
  flags.ito_correction = false;
  Stepper stepper(ops, 0.05, flags);
  TrajectoryState state = stepper.initial_state(vortex_dual(*ops));
  double prev = l2_norm(*ops, state.u);
  Eigen::RowVectorXd no_noise(0);
  for (int m = 0; m < 10; ++m) {
    stepper.step(state, no_noise);
    double cur = l2_norm(*ops, state.u);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("deterministic runs satisfy the exact discrete energy identity") {
  auto ops = make_ops(3, nullptr);
  SimFlags flags;
  flags.nonlinearity = false;
  flags.noise = false;
  flags.ito_correction = false;
  const double dt = 0.02;
  Stepper stepper(ops, dt, flags);
  TrajectoryState state = stepper.initial_state(vortex_dual(*ops));
  Eigen::RowVectorXd no_noise(0);
  for (int m = 0; m < 8; ++m) {
    double e_before = std::pow(l2_norm(*ops, state.u), 2);
    Eigen::VectorXd u_before = state.u;
    stepper.step(state, no_noise);
    double e_after = std::pow(l2_norm(*ops, state.u), 2);
    double diss = 2.0 * dt * state.u.dot(ops->K * state.u);
    double jump = std::pow(l2_norm(*ops, state.u - u_before), 2);
    // ||u+||^2 - ||u||^2 + 2 dt u+^T K u+ + ||u+ - u||^2 = 0, exactly.
    CHECK(std::abs(e_after - e_before + diss + jump) / e_before < 1e-10);
  }
}

TEST_CASE("energy ledger under the full scheme converges in dt") {
  auto noise = std::make_shared<NoiseModel>(builtin_noise_family("default4", 0.15, 4));
  auto ops = make_ops(2, noise);  // small mesh keeps the unit test quick
  const double T = 0.5;
  const int finest = 256;
  BrownianDriver fine_path = sample_path(7, 0, finest, T / finest, 4);

  std::vector<double> dts, residuals;
  for (int steps : {32, 64, 128, 256}) {
    BrownianDriver path = fine_path.coarsen(finest / steps);
    Stepper stepper(ops, T / steps);
    Trajectory traj = simulate(stepper, vortex_dual(*ops), path, 0);
    EnergyReport rep = energy_report(traj);
    dts.push_back(T / steps);
    residuals.push_back(rep.max_abs_residual);
  }
  EocFit fit = fit_eoc(residuals, dts);
  CHECK(fit.slope >= 0.4);
  CHECK(residuals.back() < residuals.front());
}

TEST_CASE("simulate is deterministic and stride only selects snapshots") {
  auto noise = std::make_shared<NoiseModel>(builtin_noise_family("default4", 0.2, 4));
  auto ops = make_ops(2, noise);
  Stepper stepper(ops, 0.01);
  BrownianDriver path = sample_path(13, 2, 32, 0.01, 4);
  Eigen::VectorXd dual = vortex_dual(*ops);

  Trajectory a = simulate(stepper, dual, path, 1);
  Trajectory b = simulate(stepper, dual, path, 1);
  REQUIRE(a.norms.size() == b.norms.size());
  for (std::size_t i = 0; i < a.norms.size(); ++i) {
    CHECK(a.norms[i].l2_norm == b.norms[i].l2_norm);
    CHECK(a.norms[i].h1_seminorm == b.norms[i].h1_seminorm);
    CHECK(a.norms[i].energy_residual == b.norms[i].energy_residual);
  }

  Trajectory c = simulate(stepper, dual, path, 2);
  CHECK(c.snapshots.size() < a.snapshots.size());
  for (std::size_t i = 0; i < c.norms.size(); ++i) {
    CHECK(c.norms[i].l2_norm == a.norms[i].l2_norm);
  }
  // Snapshots at shared steps agree bitwise.
  CHECK((c.snapshots[1].second - a.snapshots[2].second).norm() == 0.0);
}

TEST_CASE("amplitude-zero noise reduces to the deterministic path") {
  auto zero_noise = std::make_shared<NoiseModel>(
      build_noise_family({{named_stream("xy"), 0.0}, {named_stream("x2-y2"), 0.0}}));
  auto ops = make_ops(2, zero_noise);
  BrownianDriver path = sample_path(3, 0, 16, 0.02, 2);

  Stepper with_noise(ops, 0.02);
  SimFlags off;
  off.noise = false;
  off.ito_correction = false;
  Stepper without(ops, 0.02, off);

  Eigen::VectorXd dual = vortex_dual(*ops);
  Trajectory a = simulate(with_noise, dual, path, 0);
  Trajectory b = simulate(without, dual, path, 0);
  for (std::size_t i = 0; i < a.norms.size(); ++i) {
    CHECK(a.norms[i].l2_norm == doctest::Approx(b.norms[i].l2_norm).epsilon(1e-13));
  }
}

TEST_CASE("divergence constraint holds after every step") {
  auto noise = std::make_shared<NoiseModel>(builtin_noise_family("default4", 0.25, 4));
  auto ops = make_ops(3, noise);
  Stepper stepper(ops, 0.01);
  TrajectoryState state = stepper.initial_state(vortex_dual(*ops));
  BrownianDriver path = sample_path(17, 1, 20, 0.01, 4);
  for (int m = 0; m < path.steps(); ++m) {
    stepper.step(state, path.increments.row(m));
    CHECK(div_residual(*ops, state.u) < 1e-9);
  }
}

TEST_CASE("term dropout matches an independent deterministic stepper") {
  auto ops = make_ops(2, nullptr);
  const double dt = 0.02;
  SimFlags flags;
  flags.noise = false;
  flags.ito_correction = false;
  Stepper stepper(ops, dt, flags);
  TrajectoryState state = stepper.initial_state(vortex_dual(*ops));

  // Hand-rolled semi-implicit Navier-Stokes step for comparison.
  SaddleSolver solver(*ops, 1.0, dt);
  Eigen::VectorXd u = helmholtz_project(*ops, vortex_dual(*ops)).v;
  Eigen::RowVectorXd no_noise(0);
  for (int m = 0; m < 10; ++m) {
    stepper.step(state, no_noise);
    Eigen::VectorXd rhs = ops->M * u - dt * eval_nonlinear(*ops, u);
    u = solver.solve(rhs).v;
    CHECK(l2_norm(*ops, state.u - u) / l2_norm(*ops, u) < 1e-12);
  }
}

TEST_CASE("energy report series matches the norm log") {
  auto noise = std::make_shared<NoiseModel>(builtin_noise_family("default4", 0.2, 4));
  auto ops = make_ops(2, noise);
  Stepper stepper(ops, 0.02);
  BrownianDriver path = sample_path(23, 0, 16, 0.02, 4);
  Trajectory traj = simulate(stepper, vortex_dual(*ops), path, 0);
  EnergyReport rep = energy_report(traj);
  CHECK(rep.residual.size() == traj.norms.size());
  CHECK(rep.residual.front() == 0.0);  // r_0 = 0 by construction
  CHECK(rep.dissipation_rule == "implicit-point");
  double max_seen = 0.0;
  for (double r : rep.residual) max_seen = std::max(max_seen, std::abs(r));
  CHECK(rep.max_abs_residual == doctest::Approx(max_seen));
}

TEST_CASE("blow-up aborts with a step index") {
  auto ops = make_ops(2, nullptr);
  SimFlags flags;
  flags.noise = false;
  flags.ito_correction = false;
  // Enormous explicit nonlinearity at a huge dt forces non-finite values.
  Stepper stepper(ops, 1e12, flags);
  Eigen::VectorXd dual = vortex_dual(*ops, 1e8);
  BrownianDriver path = sample_path(1, 0, 8, 1e12, 0);
  bool threw = false;
  try {
    simulate(stepper, dual, path, 0);
  } catch (const BlowUpError& e) {
    threw = true;
    CHECK(e.step >= 1);
  } catch (const SolveError&) {
    threw = true;  // residual check may fire first on the way to non-finite
  }
  CHECK(threw);
}
