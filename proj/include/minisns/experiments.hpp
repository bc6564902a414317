#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "minisns/config.hpp"
#include "minisns/integrator.hpp"
#include "minisns/noise.hpp"
#include "minisns/operators.hpp"

namespace minisns {

struct StudyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EocFit {
  double slope = 0.0;
  std::vector<double> pairwise;  // log(e_i/e_{i+1}) / log(h_i/h_{i+1})
  bool defined = true;           // false when the fit was skipped (all-zero errors)
};

/// Least-squares slope in log-log coordinates plus pairwise orders.
/// Requires >= 2 strictly positive errors.
EocFit fit_eoc(const std::vector<double>& errors, const std::vector<double>& hs);

/// Monte Carlo strong-convergence study with common random numbers: one
/// Brownian path per sample drives the reference level and every coarse
/// level on a shared fine time grid.
struct StudyConfig {
  std::vector<int> levels;  // refinement depths of the unit-square base (n = 2^level)
  int reference_level = 6;
  double T = 0.25;
  int steps = 128;
  int samples = 16;
  std::uint64_t base_seed = 1;
  NoiseModel noise;  // kappa_estimate must be stamped (< 1) unless noise is empty
  std::string u0_name = "vortex";
  double u0_amplitude = 1.0;
  SimFlags flags;
  int snapshot_stride = 1;  // sup-in-time error sampled every stride steps
  int threads = 1;
  int quad_degree = 10;
};

struct LevelError {
  int level = 0;
  double h = 0.0;
  double e_c = 0.0;        // sqrt(mean of max-in-time squared L2 error)
  double e_h1 = 0.0;       // sqrt(mean of time-integrated squared H1 error)
  double combined = 0.0;   // e_c + e_h1
  double se_c = 0.0;       // Monte Carlo standard errors (delta method)
  double se_h1 = 0.0;
  double se_combined = 0.0;
};

struct ErrorReport {
  std::vector<LevelError> levels;
  EocFit fit;  // on the combined error
  int completed_samples = 0;
  int aborted_samples = 0;
  std::vector<std::string> aborted_log;
  double c_zeta = 0.0;
  double kappa_estimate = -1.0;
  std::string dissipation_rule = "implicit-point";
  std::string warn;
};

ErrorReport run_convergence_study(const StudyConfig& cfg);

/// Built-in initial fields: "vortex" (clamped double-vortex, zero on the
/// boundary, divergence-free) and "zero".
Eigen::Vector2d builtin_field(const std::string& name, const Eigen::Vector2d& p);

/// Deterministic forcing for manufactured-solution regression: the load
/// whose steady Stokes solution is the vortex field. Outside the
/// stochastic model.
Eigen::Vector2d manufactured_forcing(const Eigen::Vector2d& p);

/// Algebraic identity suite: skew-symmetry, nonlinearity neutrality, the
/// energy coercivity relation, Ito-correction identities, projection
/// idempotency/orthogonality/Pythagoras, on random constrained vectors.
struct CheckResult {
  std::string name;
  double worst_residual = 0.0;  // relative
};

std::vector<CheckResult> run_identity_checks(const std::vector<int>& levels,
                                             int vectors_per_level, std::uint64_t seed,
                                             const NoiseModel& noise, int quad_degree = 10);

/// Noise model from config keys (noise.family / noise.amplitude /
/// noise.modes, or noise.modeK.stream + noise.modeK.amplitude).
NoiseModel noise_from_config(const Config& cfg);

StudyConfig study_from_config(const Config& cfg);

/// CLI entry point (subcommands: mesh-info, check, simulate, study,
/// operator-lab, energy).
int cli_main(int argc, char** argv);

}  // namespace minisns
