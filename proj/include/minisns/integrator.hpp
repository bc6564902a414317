#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minisns/noise.hpp"
#include "minisns/operators.hpp"

namespace minisns {

struct BlowUpError : std::runtime_error {
  BlowUpError(int step_) : std::runtime_error("trajectory blow-up at step " +
                                              std::to_string(step_)), step(step_) {}
  int step;
};

struct SimFlags {
  bool nonlinearity = true;
  bool ito_correction = true;
  bool noise = true;
};

/// Velocity state advancing under the semidiscrete system; u stays in the
/// discretely divergence-free space after every step.
struct TrajectoryState {
  Eigen::VectorXd u;
  Eigen::VectorXd q;        // pressure multiplier of the last solve
  double t = 0.0;
  int step = 0;
  double dissipation = 0.0; // running sum dt * u^T K u at the implicit point
};

struct NormLogRow {
  int step;
  double t;
  double l2_norm;
  double h1_seminorm;
  double energy_residual;
};

struct Trajectory {
  std::vector<NormLogRow> norms;                // one row per step incl. step 0
  std::vector<std::pair<int, Eigen::VectorXd>> snapshots;
  TrajectoryState final_state;
  // Dissipation quadrature convention used by the energy ledger.
  std::string dissipation_rule = "implicit-point";
};

/// One drift-implicit Euler-Maruyama step: viscous term implicit, the
/// nonlinearity, Ito correction and noise explicit. Requires the
/// factorization of M + dt K held by the stepper.
class Stepper {
 public:
  Stepper(std::shared_ptr<const OperatorSet> ops, double dt, SimFlags flags = {});

  void step(TrajectoryState& state, const Eigen::RowVectorXd& increments) const;

  /// Initial state from an L^2 datum (projected into the divergence-free
  /// space, u_h(0) = P_h u_0).
  TrajectoryState initial_state(const Eigen::VectorXd& u0_dual) const;

  const OperatorSet& ops() const { return *ops_; }
  double dt() const { return dt_; }
  const SimFlags& flags() const { return flags_; }

  /// Optional deterministic forcing dual vector (constant in time); outside
  /// the stochastic model, used for manufactured-solution regression.
  void set_forcing(Eigen::VectorXd dual) { forcing_ = std::move(dual); }

 private:
  std::shared_ptr<const OperatorSet> ops_;
  double dt_;
  SimFlags flags_;
  SaddleSolver solver_;  // M + dt K
  std::optional<Eigen::VectorXd> forcing_;
};

/// Runs `path.steps()` steps from the projected initial datum; records norms
/// every step and snapshots every `snapshot_stride` steps (0 disables them).
Trajectory simulate(const Stepper& stepper, const Eigen::VectorXd& u0_dual,
                    const BrownianDriver& path, int snapshot_stride = 0);

struct EnergyReport {
  std::vector<double> residual;  // r_m per step
  double max_abs_residual = 0.0;
  std::string dissipation_rule;
};

/// Pathwise energy-equality residual series
/// r_m = ||u^m||^2 + 2 sum_{j<=m} dt ||u^j||_K^2 - ||u^0||^2.
EnergyReport energy_report(const Trajectory& traj);

}  // namespace minisns
