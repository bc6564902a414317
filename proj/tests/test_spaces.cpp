#include <doctest.h>

#include <cmath>

#include "minisns/spaces.hpp"

using namespace minisns;

namespace {

// Independent oracle: integral of lambda^a lambda^b lambda^c over the
// reference triangle from the closed-form barycentric moment formula
// 2A a! b! c! / (a+b+c+2)! with A = 1/2.
double moment_oracle(int a, int b, int c) {
  auto fact = [](int n) {
    double r = 1;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
  };
  return fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
}

}  // namespace

TEST_CASE("local basis values at the centroid and edges") {
  ShapeEval e = evaluate_local_basis({1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(e.value[3] == doctest::Approx(1.0 / 27).epsilon(1e-15));
  CHECK(e.value[0] + e.value[1] + e.value[2] == doctest::Approx(1.0).epsilon(1e-15));

  // Any point with one vanishing coordinate kills the bubble.
  ShapeEval edge = evaluate_local_basis({0.0, 0.3, 0.7});
  CHECK(edge.value[3] == 0.0);

  CHECK_THROWS_AS(evaluate_local_basis({-0.1, 0.6, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_local_basis({0.5, 0.2, 0.2}), std::invalid_argument);
}

TEST_CASE("vertex functions form a partition of unity") {
  for (double a : {0.1, 0.25, 0.6}) {
    for (double b : {0.05, 0.3}) {
      ShapeEval e = evaluate_local_basis({1.0 - a - b, a, b});
      CHECK(e.value[0] + e.value[1] + e.value[2] == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("quadrature integrates constants, the bubble and lambda^2 exactly") {
  QuadratureRule rule = make_quadrature(10);
  CHECK(rule.exact_degree >= 10);

  double area = 0.0, bubble = 0.0, l1sq = 0.0;
  for (int q = 0; q < rule.size(); ++q) {
    const auto& p = rule.points[q];
    area += rule.weights[q];
    bubble += rule.weights[q] * p[0] * p[1] * p[2];
    l1sq += rule.weights[q] * p[0] * p[0];
  }
  CHECK(area == doctest::Approx(0.5).epsilon(1e-14));           // area(ref triangle)
  CHECK(bubble == doctest::Approx(0.5 / 60.0).epsilon(1e-13));  // area/60
  CHECK(l1sq == doctest::Approx(0.5 / 6.0).epsilon(1e-13));     // area/6
}

TEST_CASE("quadrature matches the moment oracle through its exact degree") {
  for (int degree : {1, 4, 10, 15}) {
    QuadratureRule rule = make_quadrature(degree);
    CHECK(rule.exact_degree >= degree);
    for (int a = 0; a <= rule.exact_degree; ++a) {
      for (int b = 0; a + b <= rule.exact_degree; ++b) {
        for (int c = 0; a + b + c <= rule.exact_degree; ++c) {
          double got = 0.0;
          for (int q = 0; q < rule.size(); ++q) {
            const auto& p = rule.points[q];
            got += rule.weights[q] * std::pow(p[0], a) * std::pow(p[1], b) * std::pow(p[2], c);
          }
          double exact = moment_oracle(a, b, c);
          CHECK(std::abs(got - exact) < 1e-12 * std::max(1.0, std::abs(exact)));
        }
      }
    }
  }
  CHECK_THROWS_AS(make_quadrature(0), std::invalid_argument);
  CHECK_THROWS_AS(make_quadrature(-3), std::invalid_argument);
  CHECK_THROWS_AS(make_quadrature(100), std::invalid_argument);
}

TEST_CASE("weights are positive and sum to the reference area") {
  for (int degree : {2, 7, 12}) {
    QuadratureRule rule = make_quadrature(degree);
    double sum = 0.0;
    for (double w : rule.weights) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(0.5).epsilon(1e-14));
  }
}

TEST_CASE("bubble gradient integrates to zero over the element") {
  Mesh m = build_structured_square(3);
  QuadratureRule rule = make_quadrature(10);
  for (int t = 0; t < m.num_triangles(); ++t) {
    ElementGeometry geo = element_geometry(m, t);
    Eigen::Vector2d integral = Eigen::Vector2d::Zero();
    for (int q = 0; q < rule.size(); ++q) {
      ShapeEval e = evaluate_local_basis(rule.points[q]);
      integral += rule.weights[q] * geo.det_jacobian * (geo.inv_jacobian_T * e.ref_grad[3]);
    }
    CHECK(integral.norm() < 1e-14);
  }
}

TEST_CASE("vertex interpolation reproduces global linear functions") {
  Mesh m = build_structured_square(3);
  auto lin = [](const Eigen::Vector2d& p) { return 2.0 * p.x() - 0.7 * p.y() + 0.3; };
  QuadratureRule rule = make_quadrature(4);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    for (int q = 0; q < rule.size(); ++q) {
      const auto& bc = rule.points[q];
      ShapeEval e = evaluate_local_basis(bc);
      Eigen::Vector2d x = bc[0] * m.vertices[tri[0]] + bc[1] * m.vertices[tri[1]] +
                          bc[2] * m.vertices[tri[2]];
      double interp = 0.0;  // vertex dofs only; bubble coefficient zero
      for (int i = 0; i < 3; ++i) interp += lin(m.vertices[tri[i]]) * e.value[i];
      CHECK(interp == doctest::Approx(lin(x)).epsilon(1e-13));
    }
  }
}

TEST_CASE("dofmap masks boundary vertices and never bubbles") {
  Mesh m = build_structured_square(4);
  DofMap d = build_dofmap(m);
  int interior = 0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (!m.boundary_vertex[v]) ++interior;
  }
  CHECK(d.num_constrained() == 2 * interior + 2 * m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    CHECK(d.interior_node[d.num_vertices + t] == 1);
  }
  CHECK(d.num_pressure_dofs() == m.num_vertices());
}
