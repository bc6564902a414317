#pragma once

#include <map>
#include <utility>

#include <Eigen/Dense>

namespace minisns {

/// Bivariate polynomial with a sparse (i, j) -> coefficient table.
class Poly2 {
 public:
  Poly2() = default;

  static Poly2 monomial(int i, int j, double c) {
    Poly2 p;
    p.add_term(i, j, c);
    return p;
  }

  void add_term(int i, int j, double c) {
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace({i, j}, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  Poly2 operator+(const Poly2& other) const {
    Poly2 r = *this;
    for (const auto& [ij, c] : other.terms_) r.add_term(ij.first, ij.second, c);
    return r;
  }

  Poly2 operator*(const Poly2& other) const {
    Poly2 r;
    for (const auto& [ij, c] : terms_) {
      for (const auto& [kl, d] : other.terms_) {
        r.add_term(ij.first + kl.first, ij.second + kl.second, c * d);
      }
    }
    return r;
  }

  Poly2 scaled(double s) const {
    Poly2 r;
    for (const auto& [ij, c] : terms_) r.add_term(ij.first, ij.second, s * c);
    return r;
  }

  Poly2 deriv_x() const {
    Poly2 r;
    for (const auto& [ij, c] : terms_) {
      if (ij.first > 0) r.add_term(ij.first - 1, ij.second, c * ij.first);
    }
    return r;
  }

  Poly2 deriv_y() const {
    Poly2 r;
    for (const auto& [ij, c] : terms_) {
      if (ij.second > 0) r.add_term(ij.first, ij.second - 1, c * ij.second);
    }
    return r;
  }

  double eval(double x, double y) const {
    double s = 0.0;
    for (const auto& [ij, c] : terms_) {
      double t = c;
      for (int k = 0; k < ij.first; ++k) t *= x;
      for (int k = 0; k < ij.second; ++k) t *= y;
      s += t;
    }
    return s;
  }

  double eval(const Eigen::Vector2d& p) const { return eval(p.x(), p.y()); }

  int degree() const {
    int d = -1;
    for (const auto& [ij, c] : terms_) d = std::max(d, ij.first + ij.second);
    return d;  // -1 for the zero polynomial
  }

  bool is_zero(double tol = 0.0) const {
    for (const auto& [ij, c] : terms_) {
      if (std::abs(c) > tol) return false;
    }
    return true;
  }

  const std::map<std::pair<int, int>, double>& terms() const { return terms_; }

 private:
  std::map<std::pair<int, int>, double> terms_;
};

}  // namespace minisns
