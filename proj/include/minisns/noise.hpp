#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minisns/polynomial.hpp"

namespace minisns {

/// One transport-noise mode: amplitude * curl(psi) with a polynomial stream
/// function, so the field is divergence-free by construction.
struct NoiseMode {
  Poly2 psi;
  double amplitude = 1.0;
  Poly2 zeta_x;  // amplitude * d(psi)/dy
  Poly2 zeta_y;  // amplitude * -d(psi)/dx

  Eigen::Vector2d eval(const Eigen::Vector2d& p) const {
    return {zeta_x.eval(p), zeta_y.eval(p)};
  }
};

struct NoiseModel {
  std::vector<NoiseMode> modes;
  double C_zeta = 0.0;               // sum of squared W^{1,inf} norms
  double kappa_estimate = -1.0;      // < 0 until estimated
  bool kappa_warn = false;           // set when the estimate reaches 1

  int N() const { return static_cast<int>(modes.size()); }
  int max_degree() const;
};

struct StreamSpec {
  Poly2 psi;
  double amplitude = 1.0;
};

/// Builds the family and computes C_zeta by a dense-grid sup oracle
/// (grid_per_side^2 sample points, values and first derivatives).
NoiseModel build_noise_family(const std::vector<StreamSpec>& spec, int grid_per_side = 101);

/// Named stream functions accepted in config files.  `poly: i j c; i j c; ...`
/// declares raw monomial terms.
Poly2 named_stream(const std::string& name);

/// Built-in families:
///   default4          low-degree fields, not vanishing on the boundary
///   boundary_vanishing4  fields with zeta = 0 on the boundary, for contrast
/// `amplitude` scales every mode; `modes` truncates the family (<= 4).
NoiseModel builtin_noise_family(const std::string& family, double amplitude, int modes = 4);

/// W^{1,inf} norm surrogate of one mode on the unit square:
/// max over the grid of max(|zeta|, |grad zeta|_F).
double field_w1inf_norm(const NoiseMode& mode, int grid_per_side = 101);

/// Truncated l^2-cylindrical Brownian increments on a uniform grid.
/// increments(m, n) ~ N(0, dt), a pure function of
/// (base_seed, sample_index, mode, step).
struct BrownianDriver {
  std::uint64_t base_seed = 0;
  std::uint64_t sample_index = 0;
  double dt = 0.0;
  Eigen::MatrixXd increments;  // steps x N

  int steps() const { return static_cast<int>(increments.rows()); }
  int N() const { return static_cast<int>(increments.cols()); }

  /// Sums consecutive increments: same path on a grid coarsened by `factor`.
  BrownianDriver coarsen(int factor) const;
};

BrownianDriver sample_path(std::uint64_t base_seed, std::uint64_t sample_index, int steps,
                           double dt, int N);

/// Deterministic keyed N(0,1) draw; the generator behind sample_path.
double gaussian_draw(std::uint64_t base_seed, std::uint64_t sample_index, std::uint64_t mode,
                     std::uint64_t step);

}  // namespace minisns
