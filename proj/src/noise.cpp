#include "minisns/noise.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace minisns {

int NoiseModel::max_degree() const {
  int d = 0;
  for (const auto& m : modes) {
    d = std::max({d, m.zeta_x.degree(), m.zeta_y.degree()});
  }
  return d;
}

double field_w1inf_norm(const NoiseMode& mode, int grid_per_side) {
  const Poly2 dxx = mode.zeta_x.deriv_x();
  const Poly2 dxy = mode.zeta_x.deriv_y();
  const Poly2 dyx = mode.zeta_y.deriv_x();
  const Poly2 dyy = mode.zeta_y.deriv_y();
  double sup_val = 0.0, sup_grad = 0.0;
  const int n = grid_per_side;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      double x = double(i) / (n - 1);
      double y = double(j) / (n - 1);
      double vx = mode.zeta_x.eval(x, y);
      double vy = mode.zeta_y.eval(x, y);
      sup_val = std::max(sup_val, std::sqrt(vx * vx + vy * vy));
      double g = dxx.eval(x, y) * dxx.eval(x, y) + dxy.eval(x, y) * dxy.eval(x, y) +
                 dyx.eval(x, y) * dyx.eval(x, y) + dyy.eval(x, y) * dyy.eval(x, y);
      sup_grad = std::max(sup_grad, std::sqrt(g));
    }
  }
  return std::max(sup_val, sup_grad);
}

NoiseModel build_noise_family(const std::vector<StreamSpec>& spec, int grid_per_side) {
  NoiseModel model;
  for (const auto& s : spec) {
    if (!std::isfinite(s.amplitude)) {
      throw std::invalid_argument("build_noise_family: amplitude must be finite");
    }
    NoiseMode mode;
    mode.psi = s.psi;
    mode.amplitude = s.amplitude;
    mode.zeta_x = s.psi.deriv_y().scaled(s.amplitude);
    mode.zeta_y = s.psi.deriv_x().scaled(-s.amplitude);
    // div zeta = d/dx d/dy psi - d/dy d/dx psi; coefficients cancel up to the
    // last ulp of the amplitude scaling.
    Poly2 div = mode.zeta_x.deriv_x() + mode.zeta_y.deriv_y();
    double scale = 0.0;
    for (const auto& [ij, c] : mode.zeta_x.terms()) scale = std::max(scale, std::abs(c));
    for (const auto& [ij, c] : mode.zeta_y.terms()) scale = std::max(scale, std::abs(c));
    if (!div.is_zero(1e-13 * std::max(scale, 1.0))) {
      throw std::logic_error("build_noise_family: stream construction lost solenoidality");
    }
    model.modes.push_back(std::move(mode));
  }
  double c = 0.0;
  for (const auto& m : model.modes) {
    double norm = field_w1inf_norm(m, grid_per_side);
    c += norm * norm;  // amplitude already folded into zeta
  }
  model.C_zeta = c;
  if (model.modes.empty()) model.kappa_estimate = 0.0;
  return model;
}

Poly2 named_stream(const std::string& name) {
  auto x = [](int i, int j, double c) { return Poly2::monomial(i, j, c); };
  // b(x, y) = 256 x^2 (1-x)^2 y^2 (1-y)^2, the boundary bubble scaled to max 1.
  auto bump1d = [&](bool in_x) {
    Poly2 t = in_x ? x(2, 0, 1.0) + x(3, 0, -2.0) + x(4, 0, 1.0)
                   : x(0, 2, 1.0) + x(0, 3, -2.0) + x(0, 4, 1.0);
    return t;
  };
  if (name == "xy") return x(1, 1, 1.0);
  if (name == "x2-y2") return x(2, 0, 1.0) + x(0, 2, -1.0);
  if (name == "x2y") return x(2, 1, 1.0);
  if (name == "xy2") return x(1, 2, 1.0);
  if (name == "bubble") return (bump1d(true) * bump1d(false)).scaled(256.0);
  if (name == "bubble_x") return (bump1d(true) * bump1d(false) * x(1, 0, 1.0)).scaled(256.0);
  if (name == "bubble_y") return (bump1d(true) * bump1d(false) * x(0, 1, 1.0)).scaled(256.0);
  if (name == "bubble_xy") return (bump1d(true) * bump1d(false) * x(1, 1, 1.0)).scaled(256.0);
  if (name.rfind("poly:", 0) == 0) {
    // "poly: i j c; i j c; ..."
    Poly2 p;
    std::string body = name.substr(5);
    std::stringstream ss(body);
    std::string term;
    bool any = false;
    while (std::getline(ss, term, ';')) {
      std::stringstream ts(term);
      int i, j;
      double c;
      if (ts >> i >> j >> c) {
        if (i < 0 || j < 0) throw std::invalid_argument("named_stream: negative exponent");
        p.add_term(i, j, c);
        any = true;
      }
    }
    if (!any) throw std::invalid_argument("named_stream: empty poly spec");
    return p;
  }
  throw std::invalid_argument("named_stream: unknown stream function '" + name +
                              "' (polynomial stream functions only)");
}

NoiseModel builtin_noise_family(const std::string& family, double amplitude, int modes) {
  if (modes < 0 || modes > 4) {
    throw std::invalid_argument("builtin_noise_family: modes must be in [0, 4]");
  }
  std::vector<std::string> names;
  if (family == "default4") {
    names = {"xy", "x2-y2", "x2y", "xy2"};
  } else if (family == "boundary_vanishing4") {
    names = {"bubble", "bubble_x", "bubble_y", "bubble_xy"};
  } else if (family == "none") {
    names = {};
  } else {
    throw std::invalid_argument("builtin_noise_family: unknown family '" + family + "'");
  }
  std::vector<StreamSpec> spec;
  for (int n = 0; n < std::min<int>(modes, names.size()); ++n) {
    // Mild decay across modes keeps the first mode dominant.
    spec.push_back({named_stream(names[n]), amplitude * std::pow(0.7, n)});
  }
  return build_noise_family(spec);
}

namespace {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform_open(std::uint64_t bits) {
  // (0, 1]: top 53 bits, shifted away from zero.
  return (double(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

double gaussian_draw(std::uint64_t base_seed, std::uint64_t sample_index, std::uint64_t mode,
                     std::uint64_t step) {
  std::uint64_t k = splitmix64(base_seed);
  k = splitmix64(k ^ (sample_index * 0x9e3779b97f4a7c15ULL + 1));
  k = splitmix64(k ^ (mode * 0xbf58476d1ce4e5b9ULL + 2));
  k = splitmix64(k ^ (step * 0x94d049bb133111ebULL + 3));
  std::uint64_t u1 = splitmix64(k);
  std::uint64_t u2 = splitmix64(u1 ^ 0xd1b54a32d192ed03ULL);
  double r = std::sqrt(-2.0 * std::log(uniform_open(u1)));
  return r * std::cos(2.0 * M_PI * uniform_open(u2));
}

BrownianDriver sample_path(std::uint64_t base_seed, std::uint64_t sample_index, int steps,
                           double dt, int N) {
  if (steps < 1) throw std::invalid_argument("sample_path: steps must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("sample_path: dt must be positive");
  BrownianDriver d;
  d.base_seed = base_seed;
  d.sample_index = sample_index;
  d.dt = dt;
  d.increments.resize(steps, N);
  const double scale = std::sqrt(dt);
  for (int m = 0; m < steps; ++m) {
    for (int n = 0; n < N; ++n) {
      d.increments(m, n) = scale * gaussian_draw(base_seed, sample_index, n, m);
    }
  }
  return d;
}

BrownianDriver BrownianDriver::coarsen(int factor) const {
  if (factor < 1 || steps() % factor != 0) {
    throw std::invalid_argument("BrownianDriver::coarsen: factor must divide steps");
  }
  BrownianDriver d;
  d.base_seed = base_seed;
  d.sample_index = sample_index;
  d.dt = dt * factor;
  d.increments.setZero(steps() / factor, N());
  for (int m = 0; m < steps(); ++m) {
    d.increments.row(m / factor) += increments.row(m);
  }
  return d;
}

}  // namespace minisns
