#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace minisns {

/// Conforming triangulation of a convex polygon (the built-in generator
/// covers the unit square). Immutable after construction.
struct Mesh {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex indices
  std::vector<std::uint8_t> boundary_vertex;  // 1 on vertices of boundary edges
  double h = 0.0;                             // max element diameter
  int level = 0;                              // refinement depth

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_boundary_vertices() const;

  /// Signed area of triangle t (positive by the orientation invariant).
  double area(int t) const;
  double total_area() const;

  /// max over elements of diameter/inradius (shape-regularity measure).
  double shape_ratio() const;
};

/// Structured mesh of the unit square: (n+1)^2 vertices, 2n^2 triangles,
/// every cell split along the (i,j)-(i+1,j+1) diagonal, h = sqrt(2)/n.
Mesh build_structured_square(int n);

/// Red refinement: each triangle splits into 4 congruent children through
/// the edge midpoints; children of element t are emitted as 4t..4t+3, which
/// the intergrid transfer relies on.
Mesh refine_uniform(const Mesh& m);

/// Checks the Mesh invariants (orientation, conformity, boundary flags,
/// area); throws std::invalid_argument on the first violation.
void validate_mesh(const Mesh& m);

/// Plain-text dump: "nv nt" header line, one "x y boundary_flag" line per
/// vertex, then one "i j k" line per triangle.
void write_mesh(const Mesh& m, std::ostream& os);

}  // namespace minisns
