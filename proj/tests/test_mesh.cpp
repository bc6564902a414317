#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "minisns/mesh.hpp"

using namespace minisns;

TEST_CASE("structured square counts and h") {
  Mesh m1 = build_structured_square(1);
  CHECK(m1.num_vertices() == 4);
  CHECK(m1.num_triangles() == 2);
  CHECK(m1.h == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  Mesh m2 = build_structured_square(2);
  CHECK(m2.num_vertices() == 9);
  CHECK(m2.num_triangles() == 8);
  CHECK(m2.total_area() == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(build_structured_square(0), std::invalid_argument);
}

TEST_CASE("corners are boundary vertices at every n") {
  for (int n : {1, 2, 5}) {
    Mesh m = build_structured_square(n);
    int np = n + 1;
    CHECK(m.boundary_vertex[0]);
    CHECK(m.boundary_vertex[n]);
    CHECK(m.boundary_vertex[np * n]);
    CHECK(m.boundary_vertex[np * np - 1]);
    validate_mesh(m);
  }
}

TEST_CASE("red refinement multiplies triangles by 4 and halves h") {
  Mesh m = build_structured_square(3);
  Mesh r = refine_uniform(m);
  CHECK(r.num_triangles() == 4 * m.num_triangles());
  CHECK(r.h == doctest::Approx(m.h / 2).epsilon(1e-14));
  CHECK(r.level == m.level + 1);
  CHECK(r.total_area() == doctest::Approx(m.total_area()).epsilon(1e-14));
  validate_mesh(r);
}

TEST_CASE("refined vertex count equals parent vertices plus edges") {
  Mesh m = build_structured_square(4);
  std::map<std::pair<int, int>, int> edges;
  for (const auto& tri : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      edges[{std::min(a, b), std::max(a, b)}] = 1;
    }
  }
  Mesh r = refine_uniform(m);
  CHECK(r.num_vertices() == m.num_vertices() + static_cast<int>(edges.size()));
}

TEST_CASE("h_l = h_0 / 2^l across a refinement hierarchy") {
  Mesh m = build_structured_square(2);
  double h0 = m.h;
  for (int l = 1; l <= 4; ++l) {
    m = refine_uniform(m);
    CHECK(m.h == doctest::Approx(h0 / std::pow(2.0, l)).epsilon(1e-13));
  }
}

TEST_CASE("quasi-uniformity: shape ratio constant under refinement") {
  Mesh m = build_structured_square(2);
  double ratio0 = m.shape_ratio();
  for (int l = 0; l < 3; ++l) {
    m = refine_uniform(m);
    CHECK(m.shape_ratio() == doctest::Approx(ratio0).epsilon(1e-12));
  }
}

TEST_CASE("children of element t occupy slots 4t..4t+3") {
  Mesh m = build_structured_square(2);
  Mesh r = refine_uniform(m);
  for (int t = 0; t < m.num_triangles(); ++t) {
    // Each child centroid must lie inside the parent triangle.
    const auto& tri = m.triangles[t];
    Eigen::Matrix2d J;
    J.col(0) = m.vertices[tri[1]] - m.vertices[tri[0]];
    J.col(1) = m.vertices[tri[2]] - m.vertices[tri[0]];
    for (int c = 0; c < 4; ++c) {
      const auto& child = r.triangles[4 * t + c];
      Eigen::Vector2d centroid =
          (r.vertices[child[0]] + r.vertices[child[1]] + r.vertices[child[2]]) / 3.0;
      Eigen::Vector2d ref = J.inverse() * (centroid - m.vertices[tri[0]]);
      CHECK(ref[0] >= -1e-14);
      CHECK(ref[1] >= -1e-14);
      CHECK(ref[0] + ref[1] <= 1.0 + 1e-14);
    }
  }
}

TEST_CASE("mesh dump round-trips through the documented text format") {
  Mesh m = build_structured_square(2);
  std::ostringstream os;
  write_mesh(m, os);
  std::istringstream is(os.str());
  int nv, nt;
  is >> nv >> nt;
  CHECK(nv == m.num_vertices());
  CHECK(nt == m.num_triangles());
  for (int v = 0; v < nv; ++v) {
    double x, y;
    int flag;
    is >> x >> y >> flag;
    CHECK(x == doctest::Approx(m.vertices[v].x()));
    CHECK(flag == int(m.boundary_vertex[v]));
  }
}
