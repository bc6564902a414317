#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "minisns/mesh.hpp"
#include "minisns/noise.hpp"
#include "minisns/spaces.hpp"

namespace minisns {

using SparseMat = Eigen::SparseMatrix<double>;

struct SolveError : std::runtime_error {
  SolveError(const std::string& what, double residual_)
      : std::runtime_error(what), residual(residual_) {}
  double residual;
};

struct OperatorSet;

/// Direct factorization of the mixed system [[A, B^T], [B, 0]] plus the
/// pressure gauge, with A = mass_coeff * M + stiffness_coeff * K. Immutable
/// once built; solves are const and reusable across threads.
class SaddleSolver {
 public:
  SaddleSolver(const OperatorSet& ops, double mass_coeff, double stiffness_coeff);

  struct Result {
    Eigen::VectorXd v;       // velocity coefficients, B v = 0
    Eigen::VectorXd q;       // pressure multiplier
    double gauge_multiplier; // ~0 for consistent data (mean-zero gauge)
    double residual;         // relative algebraic residual
  };

  /// Solves for the given velocity dual vector (pressure data zero).
  /// Throws SolveError if the relative residual exceeds 1e-10.
  Result solve(const Eigen::VectorXd& dual_rhs) const;

 private:
  Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu_;
  SparseMat system_;
  int n_v_ = 0, n_p_ = 0;
  PressureGauge gauge_ = PressureGauge::MeanZero;
  int pinned_ = 0;
};

/// All discrete operators on one mesh, boundary dofs eliminated
/// symmetrically. Constrained velocity indexing throughout.
struct OperatorSet {
  std::shared_ptr<const Mesh> mesh;
  DofMap dofs;
  std::shared_ptr<const NoiseModel> noise;

  SparseMat M;                 // velocity mass
  SparseMat K;                 // velocity stiffness
  SparseMat B;                 // <div v_h, phi_h>, pressure x velocity
  std::vector<SparseMat> T;    // per-mode transport <(zeta_n . grad) v, w>
  Eigen::VectorXd gauge;       // integral of each pressure hat function
  SparseMat Mp;                // pressure mass (inf-sup studies)

  ShapeTable table;            // default rule, exactness >= 10
  std::vector<ElementGeometry> geometry;

  std::shared_ptr<const SaddleSolver> mass_solver;  // coeff = 0

  int n_constrained() const { return dofs.num_constrained(); }
  int n_pressure() const { return dofs.num_pressure_dofs(); }
};

/// Assembles every operator of the semidiscretization. The transport
/// matrices use a rule of exactness >= deg(zeta) + 5 so the skew-symmetry
/// identities hold to machine precision.
OperatorSet assemble(std::shared_ptr<const Mesh> mesh, const DofMap& dofs,
                     std::shared_ptr<const NoiseModel> noise, int quad_degree = 10);

/// Velocity mass/stiffness on the full (unconstrained) dof set; test and
/// diagnostic use.
SparseMat assemble_full_mass(const Mesh& mesh, const DofMap& dofs, int quad_degree = 10);
SparseMat assemble_full_stiffness(const Mesh& mesh, const DofMap& dofs, int quad_degree = 10);

struct ProjectionResult {
  Eigen::VectorXd v;
  Eigen::VectorXd q;
};

/// Discrete Helmholtz projection from a velocity dual vector <f, w_h>
/// (covers weak H^{-1}-type loads; see project_coefficients for L^2 data).
ProjectionResult helmholtz_project(const OperatorSet& ops, const Eigen::VectorXd& dual_rhs);

/// Projection of an L^2 datum given by FE coefficients.
ProjectionResult project_coefficients(const OperatorSet& ops, const Eigen::VectorXd& coeffs);

/// A_h v for v in the discretely divergence-free space; rejects inputs with
/// a relative divergence residual above 1e-8.
Eigen::VectorXd apply_discrete_stokes(const OperatorSet& ops, const Eigen::VectorXd& v);

/// L_{zeta_n,h} v = P_h((zeta_n . grad) v).
Eigen::VectorXd apply_transport(const OperatorSet& ops, int mode, const Eigen::VectorXd& v);

/// (1/2) sum_n L_{zeta_n,h}^2 v via nested projections.
Eigen::VectorXd ito_correction(const OperatorSet& ops, const Eigen::VectorXd& v);

/// Dual vector of G(v) = (v . grad)v + (1/2)(div v)v.
Eigen::VectorXd eval_nonlinear(const OperatorSet& ops, const Eigen::VectorXd& v);

/// Squared Hilbert-Schmidt norm of the discrete noise operator,
/// sum_n ||L_{zeta_n,h} v||^2.
double hs_norm_sq(const OperatorSet& ops, const Eigen::VectorXd& v);

double l2_norm(const OperatorSet& ops, const Eigen::VectorXd& v);
double h1_seminorm(const OperatorSet& ops, const Eigen::VectorXd& v);

/// ||B v||_2 / ||v||_2 (0 for v = 0).
double div_residual(const OperatorSet& ops, const Eigen::VectorXd& v);

/// Velocity dual vector <f, psi_i> of an analytic field, assembled with the
/// default rule.
Eigen::VectorXd assemble_load(const OperatorSet& ops,
                              const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& f);

/// Coordinate-format text dump: one "row col value" line per entry.
void write_coordinate_format(const SparseMat& m, std::ostream& os);

}  // namespace minisns
