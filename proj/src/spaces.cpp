#include "minisns/spaces.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace minisns {

DofMap build_dofmap(const Mesh& mesh, PressureGauge gauge) {
  DofMap d;
  d.num_vertices = mesh.num_vertices();
  d.num_elements = mesh.num_triangles();
  d.gauge = gauge;
  d.interior_node.assign(d.num_nodes(), 1);
  for (int v = 0; v < d.num_vertices; ++v) {
    if (mesh.boundary_vertex[v]) d.interior_node[v] = 0;
  }
  d.constrained_index.assign(d.num_velocity_dofs(), -1);
  for (int node = 0; node < d.num_nodes(); ++node) {
    if (!d.interior_node[node]) continue;
    for (int c = 0; c < 2; ++c) {
      d.constrained_index[DofMap::velocity_dof(node, c)] = d.num_constrained();
      d.constrained_to_full.push_back(DofMap::velocity_dof(node, c));
    }
  }
  return d;
}

ShapeEval evaluate_local_basis(const Eigen::Vector3d& b) {
  constexpr double tol = 1e-12;
  if (b.minCoeff() < -tol || std::abs(b.sum() - 1.0) > tol) {
    throw std::invalid_argument("evaluate_local_basis: point outside reference simplex");
  }
  ShapeEval e;
  const double l0 = b[0], l1 = b[1], l2 = b[2];
  e.value = {l0, l1, l2, l0 * l1 * l2};
  // Reference chart (xi, eta) with l0 = 1 - xi - eta, l1 = xi, l2 = eta.
  const Eigen::Vector2d g0(-1.0, -1.0), g1(1.0, 0.0), g2(0.0, 1.0);
  e.ref_grad = {g0, g1, g2, l1 * l2 * g0 + l0 * l2 * g1 + l0 * l1 * g2};
  return e;
}

namespace {

// Gauss-Legendre nodes/weights on [0,1] via Newton on P_n.
void gauss_legendre_unit(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    // Chebyshev initial guess on [-1,1].
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p0 = 0.0, p1 = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      p0 = 1.0;
      p1 = 0.0;
      for (int k = 0; k < n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k + 1.0) * t * p1 - k * p2) / (k + 1.0);
      }
      double dp = n * (t * p0 - p1) / (t * t - 1.0);
      double dt = p0 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    p0 = 1.0;
    p1 = 0.0;
    for (int k = 0; k < n; ++k) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k + 1.0) * t * p1 - k * p2) / (k + 1.0);
    }
    double dp = n * (t * p0 - p1) / (t * t - 1.0);
    x[i] = 0.5 * (1.0 + t);
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
}

}  // namespace

double barycentric_moment(int a, int b, int c) {
  auto factorial = [](int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
  };
  return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2);
}

QuadratureRule make_quadrature(int degree) {
  if (degree < 1 || degree > 60) {
    throw std::invalid_argument("make_quadrature: degree must be in [1, 60], got " +
                                std::to_string(degree));
  }
  const int n = (degree + 3) / 2;  // ceil((degree+2)/2)
  std::vector<double> x, w;
  gauss_legendre_unit(n, x, w);

  QuadratureRule rule;
  rule.exact_degree = 2 * n - 2;
  rule.points.reserve(n * n);
  rule.weights.reserve(n * n);
  // Duffy map (xi, eta) -> (xi, eta (1 - xi)) with Jacobian (1 - xi).
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double l1 = x[i];
      double l2 = x[j] * (1.0 - x[i]);
      rule.points.emplace_back(1.0 - l1 - l2, l1, l2);
      rule.weights.push_back(w[i] * w[j] * (1.0 - x[i]));
    }
  }

  // Validate against the moment formula over the full claimed degree range.
  for (int total = 0; total <= rule.exact_degree; ++total) {
    for (int a = 0; a <= total; ++a) {
      for (int b = 0; a + b <= total; ++b) {
        int c = total - a - b;
        double quad = 0.0;
        for (int q = 0; q < rule.size(); ++q) {
          const auto& p = rule.points[q];
          quad += rule.weights[q] * std::pow(p[0], a) * std::pow(p[1], b) * std::pow(p[2], c);
        }
        double exact = barycentric_moment(a, b, c);
        if (std::abs(quad - exact) > 1e-12 * std::max(1.0, std::abs(exact))) {
          throw std::runtime_error("make_quadrature: moment validation failed");
        }
      }
    }
  }
  return rule;
}

ElementGeometry element_geometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  ElementGeometry g;
  g.origin = mesh.vertices[tri[0]];
  g.jacobian.col(0) = mesh.vertices[tri[1]] - g.origin;
  g.jacobian.col(1) = mesh.vertices[tri[2]] - g.origin;
  g.det_jacobian = g.jacobian.determinant();
  if (!(std::abs(g.det_jacobian) > 1e-300)) {
    throw std::runtime_error("element_geometry: singular element Jacobian");
  }
  g.inv_jacobian_T = g.jacobian.inverse().transpose();
  return g;
}

ShapeTable tabulate(const QuadratureRule& rule) {
  ShapeTable t;
  t.rule = rule;
  t.value.resize(rule.size());
  t.ref_grad.resize(rule.size());
  for (int q = 0; q < rule.size(); ++q) {
    ShapeEval e = evaluate_local_basis(rule.points[q]);
    t.value[q] = e.value;
    t.ref_grad[q] = e.ref_grad;
  }
  return t;
}

}  // namespace minisns
