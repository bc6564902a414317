#include "minisns/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>

namespace minisns {

namespace {

double edge_length(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a - b).norm();
}

double triangle_diameter(const Mesh& m, int t) {
  const auto& tri = m.triangles[t];
  const auto& a = m.vertices[tri[0]];
  const auto& b = m.vertices[tri[1]];
  const auto& c = m.vertices[tri[2]];
  return std::max({edge_length(a, b), edge_length(b, c), edge_length(c, a)});
}

// Edge -> number of adjacent triangles. Keys are sorted vertex pairs.
std::map<std::pair<int, int>, int> edge_counts(const Mesh& m) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& tri : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = tri[e];
      int b = tri[(e + 1) % 3];
      counts[{std::min(a, b), std::max(a, b)}] += 1;
    }
  }
  return counts;
}

}  // namespace

int Mesh::num_boundary_vertices() const {
  int n = 0;
  for (auto f : boundary_vertex) n += (f != 0);
  return n;
}

double Mesh::area(int t) const {
  const auto& tri = triangles[t];
  const Eigen::Vector2d e1 = vertices[tri[1]] - vertices[tri[0]];
  const Eigen::Vector2d e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

double Mesh::total_area() const {
  double s = 0.0;
  for (int t = 0; t < num_triangles(); ++t) s += area(t);
  return s;
}

double Mesh::shape_ratio() const {
  double worst = 0.0;
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles[t];
    const auto& a = vertices[tri[0]];
    const auto& b = vertices[tri[1]];
    const auto& c = vertices[tri[2]];
    double per = edge_length(a, b) + edge_length(b, c) + edge_length(c, a);
    double inradius = 2.0 * area(t) / per;
    worst = std::max(worst, triangle_diameter(*this, t) / inradius);
  }
  return worst;
}

Mesh build_structured_square(int n) {
  if (n < 1) throw std::invalid_argument("build_structured_square: n must be >= 1");
  Mesh m;
  m.level = 0;
  const int np = n + 1;
  m.vertices.reserve(static_cast<std::size_t>(np) * np);
  m.boundary_vertex.assign(static_cast<std::size_t>(np) * np, 0);
  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < np; ++i) {
      m.vertices.emplace_back(double(i) / n, double(j) / n);
      if (i == 0 || j == 0 || i == n || j == n) m.boundary_vertex[j * np + i] = 1;
    }
  }
  auto vid = [np](int i, int j) { return j * np + i; };
  m.triangles.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      int v00 = vid(i, j), v10 = vid(i + 1, j);
      int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }
  }
  m.h = std::sqrt(2.0) / n;
  return m;
}

Mesh refine_uniform(const Mesh& parent) {
  Mesh m;
  m.level = parent.level + 1;
  m.vertices = parent.vertices;
  m.boundary_vertex = parent.boundary_vertex;

  const auto counts = edge_counts(parent);
  std::map<std::pair<int, int>, int> midpoint;
  for (const auto& [edge, cnt] : counts) {
    int id = m.num_vertices();
    m.vertices.push_back(0.5 * (parent.vertices[edge.first] + parent.vertices[edge.second]));
    m.boundary_vertex.push_back(cnt == 1 ? 1 : 0);
    midpoint[edge] = id;
  }

  auto mid = [&midpoint](int a, int b) {
    return midpoint.at({std::min(a, b), std::max(a, b)});
  };
  m.triangles.reserve(4 * parent.triangles.size());
  for (const auto& tri : parent.triangles) {
    int v0 = tri[0], v1 = tri[1], v2 = tri[2];
    int m01 = mid(v0, v1), m12 = mid(v1, v2), m02 = mid(v0, v2);
    // Children of element t occupy slots 4t..4t+3.
    m.triangles.push_back({v0, m01, m02});
    m.triangles.push_back({m01, v1, m12});
    m.triangles.push_back({m02, m12, v2});
    m.triangles.push_back({m01, m12, m02});
  }

  double hmax = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) hmax = std::max(hmax, triangle_diameter(m, t));
  m.h = hmax;
  return m;
}

void validate_mesh(const Mesh& m) {
  for (int t = 0; t < m.num_triangles(); ++t) {
    if (m.area(t) <= 0.0) throw std::invalid_argument("mesh: nonpositive element area");
  }
  // Conformity: an edge belongs to at most two triangles, and boundary flags
  // match single-owner edges exactly.
  const auto counts = edge_counts(m);
  std::vector<std::uint8_t> on_boundary_edge(m.num_vertices(), 0);
  for (const auto& [edge, cnt] : counts) {
    if (cnt > 2) throw std::invalid_argument("mesh: edge shared by more than two triangles");
    if (cnt == 1) {
      on_boundary_edge[edge.first] = 1;
      on_boundary_edge[edge.second] = 1;
    }
  }
  for (int v = 0; v < m.num_vertices(); ++v) {
    if ((m.boundary_vertex[v] != 0) != (on_boundary_edge[v] != 0)) {
      throw std::invalid_argument("mesh: boundary flag mismatch");
    }
  }
}

void write_mesh(const Mesh& m, std::ostream& os) {
  os << m.num_vertices() << ' ' << m.num_triangles() << '\n';
  for (int v = 0; v < m.num_vertices(); ++v) {
    os << m.vertices[v].x() << ' ' << m.vertices[v].y() << ' '
       << int(m.boundary_vertex[v]) << '\n';
  }
  for (const auto& tri : m.triangles) {
    os << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
  }
}

}  // namespace minisns
