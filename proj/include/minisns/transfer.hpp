#pragma once

#include <memory>

#include "minisns/operators.hpp"

namespace minisns {

/// Intergrid coupling for a nested pair: the fine mesh is `gap` uniform
/// refinements of the coarse one, so fine element f descends from coarse
/// element f / 4^gap and coarse shapes are polynomials on every fine
/// element. The mixed Gram matrices below are assembled by fine-element
/// quadrature and are exact for the MINI spaces.
struct MeshTransfer {
  std::shared_ptr<const OperatorSet> coarse;
  std::shared_ptr<const OperatorSet> fine;
  int gap = 0;
  SparseMat mixed_mass;       // D(i_c, j_f) = <psi^f_j, psi^c_i>
  SparseMat mixed_stiffness;  // <grad psi^f_j, grad psi^c_i>
};

MeshTransfer build_transfer(std::shared_ptr<const OperatorSet> coarse,
                            std::shared_ptr<const OperatorSet> fine, int gap);

struct DiffNorms {
  double l2 = 0.0;
  double h1 = 0.0;  // seminorm of the gradient difference
};

/// Exact norms of (coarse FE function - fine FE function).
DiffNorms difference_norms(const MeshTransfer& tr, const Eigen::VectorXd& u_coarse,
                           const Eigen::VectorXd& u_fine);

/// Coarse Helmholtz projection of a fine FE field.
Eigen::VectorXd project_to_coarse(const MeshTransfer& tr, const Eigen::VectorXd& u_fine);

/// Fine L^2 projection of a coarse FE field (MINI bubbles are not nested, so
/// this is a projection rather than an interpolation).
Eigen::VectorXd lift_to_fine(const MeshTransfer& tr, const Eigen::VectorXd& u_coarse);

}  // namespace minisns
