#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "minisns/mesh.hpp"

namespace minisns {

// MINI element: velocity = (P1 + cubic bubble)^2 vanishing on the boundary,
// pressure = continuous P1 with one gauge condition.
//
// Scalar node numbering: vertex i -> node i, bubble of element t -> V + t.
// Velocity dof = 2*node + component. Pressure dof = vertex index.

inline constexpr int kShapesPerElement = 4;  // lambda_0, lambda_1, lambda_2, bubble

enum class PressureGauge { MeanZero, Pin };

struct DofMap {
  int num_vertices = 0;
  int num_elements = 0;
  std::vector<std::uint8_t> interior_node;  // per scalar node; bubbles always 1
  std::vector<int> constrained_index;       // per velocity dof; -1 on boundary dofs
  std::vector<int> constrained_to_full;     // inverse map
  PressureGauge gauge = PressureGauge::MeanZero;
  int pinned_pressure_dof = 0;  // used when gauge == Pin

  int num_nodes() const { return num_vertices + num_elements; }
  int num_velocity_dofs() const { return 2 * num_nodes(); }
  int num_constrained() const { return static_cast<int>(constrained_to_full.size()); }
  int num_pressure_dofs() const { return num_vertices; }

  static int velocity_dof(int node, int comp) { return 2 * node + comp; }
};

DofMap build_dofmap(const Mesh& mesh, PressureGauge gauge = PressureGauge::MeanZero);

/// Values and reference gradients of the 4 local scalar shapes at a
/// barycentric point. Rejects points outside the reference simplex.
struct ShapeEval {
  std::array<double, 4> value;
  std::array<Eigen::Vector2d, 4> ref_grad;  // w.r.t. (lambda_1, lambda_2) chart
};
ShapeEval evaluate_local_basis(const Eigen::Vector3d& barycentric);

/// Quadrature on the reference triangle {(0,0),(1,0),(0,1)}, conical
/// Gauss-Legendre product. Weights sum to the reference area 1/2.
struct QuadratureRule {
  std::vector<Eigen::Vector3d> points;  // barycentric
  std::vector<double> weights;
  int exact_degree = 0;

  int size() const { return static_cast<int>(points.size()); }
};

/// Rule exact for all polynomials of total degree <= degree (validated
/// against the closed-form barycentric moment formula at construction).
QuadratureRule make_quadrature(int degree);

/// Exact value of the reference-triangle moment
/// \int lambda_1^a lambda_2^b lambda_3^c = a! b! c! / (a+b+c+2)!.
double barycentric_moment(int a, int b, int c);

/// Per-element geometry: affine map F(x_ref) = v0 + J x_ref.
struct ElementGeometry {
  Eigen::Matrix2d jacobian;
  Eigen::Matrix2d inv_jacobian_T;  // maps reference gradients to physical
  double det_jacobian = 0.0;       // = 2 * area
  Eigen::Vector2d origin;
};
ElementGeometry element_geometry(const Mesh& mesh, int t);

/// Shape values/reference gradients tabulated at the points of a rule.
struct ShapeTable {
  QuadratureRule rule;
  // [q][shape]
  std::vector<std::array<double, 4>> value;
  std::vector<std::array<Eigen::Vector2d, 4>> ref_grad;
};
ShapeTable tabulate(const QuadratureRule& rule);

}  // namespace minisns
