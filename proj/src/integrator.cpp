#include "minisns/integrator.hpp"

#include <cmath>
#include <cstdio>

namespace minisns {

Stepper::Stepper(std::shared_ptr<const OperatorSet> ops, double dt, SimFlags flags)
    : ops_(std::move(ops)), dt_(dt), flags_(flags), solver_(*ops_, 1.0, dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("Stepper: dt must be positive");
  if (ops_->noise && ops_->noise->kappa_estimate >= 0.75) {
    // Explicit treatment of the Ito correction; warn near the smallness bound.
    std::fprintf(stderr,
                 "minisns: warning: kappa_estimate = %.3f >= 0.75, explicit Ito "
                 "correction may be inaccurate near the smallness boundary\n",
                 ops_->noise->kappa_estimate);
  }
}

TrajectoryState Stepper::initial_state(const Eigen::VectorXd& u0_dual) const {
  auto proj = helmholtz_project(*ops_, u0_dual);
  TrajectoryState s;
  s.u = std::move(proj.v);
  s.q = std::move(proj.q);
  return s;
}

void Stepper::step(TrajectoryState& state, const Eigen::RowVectorXd& increments) const {
  const OperatorSet& ops = *ops_;
  Eigen::VectorXd rhs = ops.M * state.u;
  if (flags_.ito_correction && !ops.T.empty()) {
    rhs += dt_ * (ops.M * ito_correction(ops, state.u));
  }
  if (flags_.nonlinearity) {
    rhs -= dt_ * eval_nonlinear(ops, state.u);
  }
  if (flags_.noise && !ops.T.empty()) {
    if (increments.size() < static_cast<int>(ops.T.size())) {
      throw std::invalid_argument("Stepper::step: increment row shorter than mode count");
    }
    for (int n = 0; n < static_cast<int>(ops.T.size()); ++n) {
      rhs += increments[n] * (ops.T[n] * state.u);
    }
  }
  if (forcing_) rhs += dt_ * (*forcing_);

  auto sol = solver_.solve(rhs);
  if (!sol.v.allFinite()) throw BlowUpError(state.step + 1);

  state.u = std::move(sol.v);
  state.q = std::move(sol.q);
  state.step += 1;
  state.t = state.step * dt_;
  state.dissipation += dt_ * state.u.dot(ops.K * state.u);

  double dres = div_residual(ops, state.u);
  if (dres > 1e-9) {
    throw SolveError("Stepper::step: divergence constraint violated, residual " +
                     std::to_string(dres), dres);
  }
}

Trajectory simulate(const Stepper& stepper, const Eigen::VectorXd& u0_dual,
                    const BrownianDriver& path, int snapshot_stride) {
  const OperatorSet& ops = stepper.ops();
  Trajectory traj;
  TrajectoryState state = stepper.initial_state(u0_dual);
  const double e0 = std::pow(l2_norm(ops, state.u), 2);

  auto log_row = [&](const TrajectoryState& s) {
    double l2 = l2_norm(ops, s.u);
    double res = l2 * l2 + 2.0 * s.dissipation - e0;
    traj.norms.push_back({s.step, s.t, l2, h1_seminorm(ops, s.u), res});
  };
  auto snapshot = [&](const TrajectoryState& s) {
    if (snapshot_stride > 0 && s.step % snapshot_stride == 0) {
      traj.snapshots.emplace_back(s.step, s.u);
    }
  };

  log_row(state);
  snapshot(state);
  for (int m = 0; m < path.steps(); ++m) {
    stepper.step(state, path.increments.row(m));
    if (!state.u.allFinite()) throw BlowUpError(state.step);
    log_row(state);
    snapshot(state);
  }
  traj.final_state = std::move(state);
  return traj;
}

EnergyReport energy_report(const Trajectory& traj) {
  EnergyReport rep;
  rep.dissipation_rule = traj.dissipation_rule;
  rep.residual.reserve(traj.norms.size());
  for (const auto& row : traj.norms) {
    rep.residual.push_back(row.energy_residual);
    rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(row.energy_residual));
  }
  return rep;
}

}  // namespace minisns
