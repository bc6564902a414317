#include "minisns/operator_lab.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>

#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

namespace minisns {

namespace {

// Deterministic generic start vector for power iterations.
Eigen::VectorXd generic_start(int dim) {
  Eigen::VectorXd v(dim);
  std::uint32_t s = 2654435761u;
  for (int i = 0; i < dim; ++i) {
    s = s * 1664525u + 1013904223u;
    v[i] = 1.0 + 0.618 * (double(s) / 4294967296.0);
  }
  return v / v.norm();
}

// Largest eigenvalue of a symmetric PSD operator given as a functor.
double top_eigenvalue(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                      int dim, double tol = 1e-11, int maxit = 20000) {
  Eigen::VectorXd v = generic_start(dim);
  double lambda = 0.0;
  for (int it = 0; it < maxit; ++it) {
    Eigen::VectorXd w = apply(v);
    double nl = v.dot(w);
    double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    if (it > 2 && std::abs(nl - lambda) <= tol * std::abs(nl)) return nl;
    lambda = nl;
  }
  std::fprintf(stderr, "minisns: warning: power iteration hit maxit (value %.6e)\n", lambda);
  return lambda;
}

// M-orthonormal dense basis of {B x = 0} on the constrained dofs. The
// constant-pressure row is redundant (left kernel of B), so B with one row
// dropped has full rank and the same null space.
Eigen::MatrixXd divergence_free_basis(const OperatorSet& ops) {
  const int n_c = ops.n_constrained();
  const int n_p = ops.n_pressure();
  Eigen::MatrixXd Bt = Eigen::MatrixXd(ops.B.transpose()).rightCols(n_p - 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Bt);
  const int m = n_c - (n_p - 1);
  Eigen::MatrixXd tail = Eigen::MatrixXd::Zero(n_c, m);
  tail.bottomRows(m).setIdentity();
  Eigen::MatrixXd Z = qr.householderQ() * tail;

  double kernel_res = (ops.B * Z).norm() / std::max(1.0, Z.norm());
  if (kernel_res > 1e-10) {
    throw std::runtime_error("divergence_free_basis: null-space residual " +
                             std::to_string(kernel_res));
  }

  Eigen::MatrixXd MZ = ops.M * Z;
  Eigen::MatrixXd C = Z.transpose() * MZ;
  C = 0.5 * (C + C.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("divergence_free_basis: Gram matrix not SPD");
  }
  // Z L^{-T} is M-orthonormal.
  return llt.matrixL().solve(Z.transpose()).transpose();
}

void lapack_check(int info, const char* what) {
  if (info != 0) {
    throw std::runtime_error(std::string(what) + ": LAPACK info " + std::to_string(info));
  }
}

}  // namespace

SpectralDecomposition stokes_eigendecomposition(const OperatorSet& ops, int count) {
  const int n_c = ops.n_constrained();
  if (n_c > kDenseGuard) {
    throw std::invalid_argument("stokes_eigendecomposition: " + std::to_string(n_c) +
                                " constrained dofs exceed the dense guard " +
                                std::to_string(kDenseGuard));
  }
  Eigen::MatrixXd Z = divergence_free_basis(ops);
  const int m = static_cast<int>(Z.cols());
  Eigen::MatrixXd A = Z.transpose() * (ops.K * Z);
  A = 0.5 * (A + A.transpose()).eval();

  Eigen::VectorXd w(m);
  lapack_check(LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', m, A.data(), m, w.data()),
               "stokes_eigendecomposition");

  if (count < 0 || count > m) count = m;
  SpectralDecomposition d;
  d.eigenvalues = w.head(count);
  d.vectors = Z * A.leftCols(count);
  if (d.eigenvalues[0] <= 0.0) {
    throw std::runtime_error("stokes_eigendecomposition: nonpositive eigenvalue");
  }
  return d;
}

SpectralDecomposition dirichlet_eigendecomposition(const OperatorSet& ops, int count) {
  const int n = ops.n_constrained();
  if (n > kDenseGuard) {
    throw std::invalid_argument("dirichlet_eigendecomposition: dimension exceeds dense guard");
  }
  Eigen::MatrixXd A = Eigen::MatrixXd(ops.K);
  Eigen::MatrixXd B = Eigen::MatrixXd(ops.M);
  Eigen::VectorXd w(n);
  lapack_check(LAPACKE_dsygvd(LAPACK_COL_MAJOR, 1, 'V', 'L', n, A.data(), n, B.data(), n,
                              w.data()),
               "dirichlet_eigendecomposition");
  if (count < 0 || count > n) count = n;
  SpectralDecomposition d;
  d.eigenvalues = w.head(count);
  d.vectors = A.leftCols(count);
  return d;
}

FractionalResult fractional_apply(const SpectralDecomposition& decomp, const OperatorSet& ops,
                                  double alpha, const Eigen::VectorXd& v) {
  if (!(alpha >= -1.0 && alpha <= 1.0)) {
    throw std::invalid_argument("fractional_apply: alpha must lie in [-1, 1]");
  }
  Eigen::VectorXd c = decomp.vectors.transpose() * (ops.M * v);
  Eigen::VectorXd inside = decomp.vectors * c;
  FractionalResult r;
  double vn = l2_norm(ops, v);
  r.truncation_residual = vn > 0 ? l2_norm(ops, v - inside) / vn : 0.0;
  r.imprecise = r.truncation_residual > 1e-8;
  r.v = decomp.vectors * (decomp.eigenvalues.array().pow(alpha) * c.array()).matrix();
  return r;
}

namespace {

struct PairAssembly {
  std::shared_ptr<const OperatorSet> coarse;
  std::shared_ptr<const OperatorSet> fine;
  MeshTransfer transfer;
};

std::shared_ptr<const OperatorSet> assemble_structured(int n, int quad_degree) {
  auto mesh = std::make_shared<Mesh>(build_structured_square(n));
  auto dofs = build_dofmap(*mesh);
  return std::make_shared<OperatorSet>(assemble(mesh, dofs, nullptr, quad_degree));
}

PairAssembly build_pair_assembly(int coarse_n, int gap, int quad_degree = 10) {
  PairAssembly p;
  p.coarse = assemble_structured(coarse_n, quad_degree);
  Mesh fine_mesh = *p.coarse->mesh;
  for (int g = 0; g < gap; ++g) fine_mesh = refine_uniform(fine_mesh);
  auto fine_ptr = std::make_shared<Mesh>(std::move(fine_mesh));
  p.fine = std::make_shared<OperatorSet>(assemble(fine_ptr, build_dofmap(*fine_ptr), nullptr,
                                                  quad_degree));
  p.transfer = build_transfer(p.coarse, p.fine, gap);
  return p;
}

// Caches keyed by (coarse_n, gap); the big fine decompositions dominate the
// study cost and are shared across alpha/beta sweeps.
std::mutex g_cache_mutex;
std::map<std::pair<int, int>, std::shared_ptr<const SurrogatePair>> g_pair_cache;
std::map<int, std::shared_ptr<const SpectralDecomposition>> g_full_space_cache;

std::shared_ptr<const SurrogatePair> cached_pair(int coarse_n, int gap) {
  {
    std::lock_guard<std::mutex> lk(g_cache_mutex);
    auto it = g_pair_cache.find({coarse_n, gap});
    if (it != g_pair_cache.end()) return it->second;
  }
  auto pair = std::make_shared<SurrogatePair>(build_surrogate_pair(coarse_n, gap));
  std::lock_guard<std::mutex> lk(g_cache_mutex);
  return g_pair_cache.try_emplace({coarse_n, gap}, std::move(pair)).first->second;
}

std::shared_ptr<const SpectralDecomposition> cached_full_space(
    const std::shared_ptr<const OperatorSet>& ops, int subdivisions) {
  {
    std::lock_guard<std::mutex> lk(g_cache_mutex);
    auto it = g_full_space_cache.find(subdivisions);
    if (it != g_full_space_cache.end()) return it->second;
  }
  auto d = std::make_shared<SpectralDecomposition>(dirichlet_eigendecomposition(*ops));
  std::lock_guard<std::mutex> lk(g_cache_mutex);
  return g_full_space_cache.try_emplace(subdivisions, std::move(d)).first->second;
}

}  // namespace

SurrogatePair build_surrogate_pair(int coarse_n, int gap, int quad_degree) {
  if (gap < 1) throw std::invalid_argument("build_surrogate_pair: gap must be >= 1");
  PairAssembly p = build_pair_assembly(coarse_n, gap, quad_degree);
  SurrogatePair pair;
  pair.coarse = p.coarse;
  pair.fine = p.fine;
  pair.transfer = std::move(p.transfer);
  pair.coarse_subdivisions = coarse_n;
  pair.gap = gap;
  pair.coarse_spec = stokes_eigendecomposition(*pair.coarse);
  pair.fine_spec = stokes_eigendecomposition(*pair.fine);
  return pair;
}

SmoothingOperator build_smoothing_operator(const SurrogatePair& pair, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("build_smoothing_operator: alpha must lie in (0, 1)");
  }
  const auto& Y = pair.coarse_spec.vectors;
  const auto& X = pair.fine_spec.vectors;
  const auto& lc = pair.coarse_spec.eigenvalues;
  const auto& lf = pair.fine_spec.eigenvalues;
  const int m_c = pair.coarse_spec.count();
  const int m_f = pair.fine_spec.count();

  // P_h applied to every fine eigenvector, through the exact mixed mass.
  Eigen::MatrixXd DX = pair.transfer.mixed_mass * X;  // n_cc x m_f dual data
  Eigen::MatrixXd P(Y.rows(), m_f);
  for (int k = 0; k < m_f; ++k) {
    P.col(k) = helmholtz_project(*pair.coarse, DX.col(k)).v;
  }

  SmoothingOperator J;
  J.alpha = alpha;
  Eigen::MatrixXd Yhat = Y.transpose() * (pair.coarse->M * P);  // m_c x m_f
  J.J_hat = lc.array().pow(alpha).matrix().asDiagonal() * Yhat *
            lf.array().pow(-alpha).matrix().asDiagonal();
  J.gram = Y.transpose() * DX;
  J.gram_h1 = Y.transpose() * (pair.transfer.mixed_stiffness * X);
  J.dense = Y * J.J_hat * (X.transpose() * pair.fine->M);
  return J;
}

void NormEstimate::fit() { slope = loglog_slope(hs, norms); }

double loglog_slope(const std::vector<double>& hs, const std::vector<double>& vals) {
  if (hs.size() != vals.size() || hs.size() < 2) {
    throw std::invalid_argument("loglog_slope: need >= 2 (h, value) pairs");
  }
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!(vals[i] > 0.0) || !(hs[i] > 0.0)) {
      throw std::invalid_argument("loglog_slope: values and mesh sizes must be positive");
    }
    pts.emplace_back(hs[i], vals[i]);
  }
  std::sort(pts.begin(), pts.end());  // ascending h; finest first
  // Least squares over the finest 3 levels; coarser ones are preasymptotic.
  const std::size_t use = std::min<std::size_t>(3, pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < use; ++i) {
    double x = std::log(pts[i].first), y = std::log(pts[i].second);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = double(use);
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double measure_operator_norm(const Eigen::MatrixXd& op_spectral,
                             const Eigen::VectorXd& source_eigs, double beta,
                             const Eigen::VectorXd& target_eigs, double gamma) {
  if (op_spectral.rows() != target_eigs.size() || op_spectral.cols() != source_eigs.size()) {
    throw std::invalid_argument("measure_operator_norm: dimension mismatch");
  }
  const double cond = source_eigs.maxCoeff() / source_eigs.minCoeff();
  if (cond > 1e12) {
    throw std::runtime_error("measure_operator_norm: spectral scaling ill-conditioned");
  }
  Eigen::VectorXd ds = source_eigs.array().pow(-beta / 2.0).matrix();
  Eigen::VectorXd dt = target_eigs.array().pow(gamma / 2.0).matrix();
  Eigen::MatrixXd mat = dt.asDiagonal() * op_spectral * ds.asDiagonal();
  // sigma_max^2 via the normal matrix on the smaller side.
  if (mat.rows() <= mat.cols()) {
    double lam = top_eigenvalue(
        [&](const Eigen::VectorXd& v) { return mat * (mat.transpose() * v).eval(); },
        static_cast<int>(mat.rows()));
    return std::sqrt(std::max(0.0, lam));
  }
  double lam = top_eigenvalue(
      [&](const Eigen::VectorXd& v) { return mat.transpose() * (mat * v).eval(); },
      static_cast<int>(mat.cols()));
  return std::sqrt(std::max(0.0, lam));
}

namespace {

// Smooth solenoidal test fields: curls of smooth stream functions.
Eigen::Vector2d smooth_solenoidal(int k, const Eigen::Vector2d& p) {
  const double pi = M_PI;
  const double x = p.x(), y = p.y();
  switch (k % 5) {
    case 0:
      return {pi * std::sin(pi * x) * std::cos(pi * y),
              -pi * std::cos(pi * x) * std::sin(pi * y)};
    case 1:
      return {pi * std::sin(2 * pi * x) * std::cos(pi * y),
              -2 * pi * std::cos(2 * pi * x) * std::sin(pi * y)};
    case 2:
      return {2 * pi * std::sin(pi * x) * std::cos(2 * pi * y),
              -pi * std::cos(pi * x) * std::sin(2 * pi * y)};
    case 3: {
      // curl of 256 x^2(1-x)^2 y^2(1-y)^2
      auto b = [](double t) { return t * t * (1 - t) * (1 - t); };
      auto db = [](double t) { return 2 * t * (1 - t) * (1 - 2 * t); };
      return {256.0 * b(x) * db(y), -256.0 * db(x) * b(y)};
    }
    default:
      return {std::sin(pi * x) * std::cos(pi * y) * pi * x,
              -(std::sin(pi * x) + pi * x * std::cos(pi * x)) * std::sin(pi * y)};
  }
}

// A_h^{-1} P_h applied to a dual load: one Stokes saddle solve.
Eigen::VectorXd stokes_solve(const OperatorSet& ops, const Eigen::VectorXd& dual) {
  SaddleSolver solver(ops, 0.0, 1.0);
  return solver.solve(dual).v;
}

Eigen::VectorXd keyed_gaussian_vector(int dim, std::uint64_t seed, std::uint64_t tag) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gaussian_draw(seed, tag, 0, i);
  return v;
}

}  // namespace

NormEstimate projection_rate_study(const std::vector<int>& coarse_ns, int gap) {
  NormEstimate est;
  est.op_tag = "proj_error_h2_l2";
  est.beta = 2.0;
  est.gap = gap;
  for (int n : coarse_ns) {
    PairAssembly p = build_pair_assembly(n, gap);
    // Stokes saddle on the fine level, reused across the 5 fields.
    SaddleSolver fine_stokes(*p.fine, 0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      auto w = [k](const Eigen::Vector2d& x) { return smooth_solenoidal(k, x); };
      Eigen::VectorXd dual = assemble_load(*p.fine, w);
      Eigen::VectorXd v = fine_stokes.solve(dual).v;  // A_f^{-1} P_f w
      double h2_norm = l2_norm(*p.fine, helmholtz_project(*p.fine, dual).v);  // ||A_f v||
      Eigen::VectorXd pv = project_to_coarse(p.transfer, v);
      double err = difference_norms(p.transfer, pv, v).l2;
      worst = std::max(worst, err / h2_norm);
    }
    est.levels.push_back(n);
    est.hs.push_back(p.coarse->mesh->h);
    est.norms.push_back(worst);
  }
  est.fit();
  return est;
}

std::pair<NormEstimate, NormEstimate> stokes_approximation_study(const std::vector<int>& coarse_ns,
                                                                 int gap) {
  NormEstimate l2est, h1est;
  l2est.op_tag = "stokes_resolvent_l2";
  h1est.op_tag = "stokes_resolvent_h1";
  l2est.gap = h1est.gap = gap;
  for (int n : coarse_ns) {
    PairAssembly p = build_pair_assembly(n, gap);
    SaddleSolver coarse_stokes(*p.coarse, 0.0, 1.0);
    SaddleSolver fine_stokes(*p.fine, 0.0, 1.0);
    double worst_l2 = 0.0, worst_h1 = 0.0;
    for (int k = 0; k < 5; ++k) {
      auto f = [k](const Eigen::Vector2d& x) { return smooth_solenoidal(k, x); };
      Eigen::VectorXd zc = coarse_stokes.solve(assemble_load(*p.coarse, f)).v;
      Eigen::VectorXd zf = fine_stokes.solve(assemble_load(*p.fine, f)).v;
      DiffNorms d = difference_norms(p.transfer, zc, zf);
      double scale = l2_norm(*p.fine, zf);
      worst_l2 = std::max(worst_l2, d.l2 / scale);
      worst_h1 = std::max(worst_h1, d.h1 / scale);
    }
    l2est.levels.push_back(n);
    h1est.levels.push_back(n);
    l2est.hs.push_back(p.coarse->mesh->h);
    h1est.hs.push_back(p.coarse->mesh->h);
    l2est.norms.push_back(worst_l2);
    h1est.norms.push_back(worst_h1);
  }
  l2est.fit();
  h1est.fit();
  return {l2est, h1est};
}

NormEstimate smoothing_error_study(const std::vector<int>& coarse_ns, int gap, double alpha,
                                   double beta, bool h1_target) {
  NormEstimate est;
  est.op_tag = h1_target ? "smoothing_error_h1" : "smoothing_error_l2";
  est.alpha = alpha;
  est.beta = beta;
  est.gamma = h1_target ? 1.0 : 0.0;
  est.gap = gap;
  for (int n : coarse_ns) {
    auto pair = cached_pair(n, gap);
    SmoothingOperator J = build_smoothing_operator(*pair, alpha);
    const auto& lf = pair->fine_spec.eigenvalues;
    const auto& lc = pair->coarse_spec.eigenvalues;
    const Eigen::MatrixXd& Jh = J.J_hat;
    const int m_f = pair->fine_spec.count();

    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> applyS;
    if (!h1_target) {
      // S = I - G^T J - J^T G + J^T J, the exact L^2 Gram of (I - J).
      const Eigen::MatrixXd& G = J.gram;
      applyS = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd jv = Jh * v;
        Eigen::VectorXd gv = G * v;
        return (v - G.transpose() * jv - Jh.transpose() * gv + Jh.transpose() * jv).eval();
      };
    } else {
      // Gradient Gram: Lambda_f - G1^T J - J^T G1 + J^T Lambda_c J.
      const Eigen::MatrixXd& G1 = J.gram_h1;
      applyS = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd jv = Jh * v;
        Eigen::VectorXd g1v = G1 * v;
        return (lf.cwiseProduct(v) - G1.transpose() * jv - Jh.transpose() * g1v +
                Jh.transpose() * lc.cwiseProduct(jv))
            .eval();
      };
    }
    Eigen::VectorXd d = lf.array().pow(-beta / 2.0).matrix();
    double lam = top_eigenvalue(
        [&](const Eigen::VectorXd& v) {
          return d.cwiseProduct(applyS(d.cwiseProduct(v))).eval();
        },
        m_f);
    est.levels.push_back(n);
    est.hs.push_back(pair->coarse_h());
    est.norms.push_back(std::sqrt(std::max(0.0, lam)));
  }
  est.fit();
  return est;
}

NormEstimate commutator_study(const std::vector<int>& coarse_ns, int gap, double alpha) {
  NormEstimate est;
  est.op_tag = "stokes_commutator";
  est.alpha = alpha;
  est.beta = 2.0 - 2.0 * alpha;
  est.gamma = -1.0;
  est.gap = gap;
  for (int n : coarse_ns) {
    auto pair = cached_pair(n, gap);
    SmoothingOperator J = build_smoothing_operator(*pair, alpha);
    Eigen::MatrixXd op = J.J_hat * pair->fine_spec.eigenvalues.asDiagonal() -
                         pair->coarse_spec.eigenvalues.asDiagonal() * J.J_hat;
    est.levels.push_back(n);
    est.hs.push_back(pair->coarse_h());
    est.norms.push_back(measure_operator_norm(op, pair->fine_spec.eigenvalues, est.beta,
                                              pair->coarse_spec.eigenvalues, est.gamma));
  }
  est.fit();
  return est;
}

NormEstimate projection_pair_study(const std::vector<int>& coarse_ns, int gap, double alpha,
                                   bool low_source) {
  NormEstimate est;
  est.op_tag = low_source ? "smoothing_vs_proj_low" : "smoothing_vs_proj";
  est.alpha = alpha;
  est.beta = low_source ? -2.0 * alpha : 1.0 - 2.0 * alpha;
  est.gamma = -1.0;
  est.gap = gap;
  for (int n : coarse_ns) {
    auto pair = cached_pair(n, gap);
    auto full = cached_full_space(pair->fine, n * (1 << gap));
    SmoothingOperator J = build_smoothing_operator(*pair, alpha);
    const int m = full->count();
    const auto& Y = pair->coarse_spec.vectors;

    Eigen::MatrixXd op(pair->coarse_spec.count(), m);
    for (int k = 0; k < m; ++k) {
      Eigen::VectorXd xk = full->vectors.col(k);
      // J P_f x: project into the fine solenoidal space, then through J_hat.
      Eigen::VectorXd pf = helmholtz_project(*pair->fine, pair->fine->M * xk).v;
      Eigen::VectorXd chat = pair->fine_spec.vectors.transpose() * (pair->fine->M * pf);
      Eigen::VectorXd jp = J.J_hat * chat;
      // P_h x directly.
      Eigen::VectorXd pc = helmholtz_project(*pair->coarse, pair->transfer.mixed_mass * xk).v;
      op.col(k) = jp - Y.transpose() * (pair->coarse->M * pc);
    }
    est.levels.push_back(n);
    est.hs.push_back(pair->coarse_h());
    est.norms.push_back(measure_operator_norm(op, full->eigenvalues, est.beta,
                                              pair->coarse_spec.eigenvalues, est.gamma));
  }
  est.fit();
  return est;
}

NormEstimate commuted_projection_study(const std::vector<int>& coarse_ns, int gap, double theta) {
  NormEstimate est;
  est.op_tag = "proj_commute";
  est.beta = theta;
  est.gamma = -1.0;
  est.gap = gap;
  for (int n : coarse_ns) {
    auto pair = cached_pair(n, gap);
    auto full = cached_full_space(pair->fine, n * (1 << gap));
    const int m = full->count();
    const auto& Y = pair->coarse_spec.vectors;
    Eigen::MatrixXd op(pair->coarse_spec.count(), m);
    for (int k = 0; k < m; ++k) {
      Eigen::VectorXd xk = full->vectors.col(k);
      Eigen::VectorXd residual = xk - helmholtz_project(*pair->fine, pair->fine->M * xk).v;
      Eigen::VectorXd w = helmholtz_project(*pair->coarse,
                                            pair->transfer.mixed_mass * residual).v;
      op.col(k) = Y.transpose() * (pair->coarse->M * w);
    }
    est.levels.push_back(n);
    est.hs.push_back(pair->coarse_h());
    est.norms.push_back(measure_operator_norm(op, full->eigenvalues, theta,
                                              pair->coarse_spec.eigenvalues, -1.0));
  }
  est.fit();
  return est;
}

NormEstimate projection_difference_study(const std::vector<int>& coarse_ns, int gap, double theta,
                                         int num_fields, std::uint64_t seed) {
  NormEstimate est;
  est.op_tag = "proj_diff_theta";
  est.beta = theta;
  est.gap = gap;
  for (int n : coarse_ns) {
    auto pair = cached_pair(n, gap);
    auto full = cached_full_space(pair->fine, n * (1 << gap));
    const int m = full->count();
    double sum_sq = 0.0;
    for (int j = 0; j < num_fields; ++j) {
      Eigen::VectorXd c = keyed_gaussian_vector(m, seed, j + 1);
      Eigen::VectorXd coeffs = (full->eigenvalues.array().pow(-theta / 2.0) * c.array()).matrix();
      Eigen::VectorXd v = full->vectors * (coeffs / c.norm());  // ||v||_theta = 1
      Eigen::VectorXd pf = helmholtz_project(*pair->fine, pair->fine->M * v).v;
      Eigen::VectorXd pc = helmholtz_project(*pair->coarse, pair->transfer.mixed_mass * v).v;
      double e2 = pf.dot(pair->fine->M * pf) - 2.0 * pc.dot(pair->transfer.mixed_mass * pf) +
                  pc.dot(pair->coarse->M * pc);
      sum_sq += std::max(0.0, e2);
    }
    est.levels.push_back(n);
    est.hs.push_back(pair->coarse_h());
    est.norms.push_back(std::sqrt(sum_sq / num_fields));
  }
  est.fit();
  return est;
}

NormEstimate inverse_inequality_study(const std::vector<int>& ns, int vectors_per_level,
                                      std::uint64_t seed) {
  NormEstimate est;
  est.op_tag = "inverse_inequality";
  est.beta = 0.0;
  est.gamma = 1.0;
  for (int n : ns) {
    auto ops = assemble_structured(n, 10);
    double worst = 0.0;
    for (int j = 0; j < vectors_per_level; ++j) {
      Eigen::VectorXd raw = keyed_gaussian_vector(ops->n_constrained(), seed, j + 1);
      Eigen::VectorXd v = project_coefficients(*ops, raw).v;
      double l2 = l2_norm(*ops, v);
      if (l2 > 0) worst = std::max(worst, h1_seminorm(*ops, v) / l2);
    }
    est.levels.push_back(n);
    est.hs.push_back(ops->mesh->h);
    est.norms.push_back(worst);
  }
  est.fit();
  return est;
}

NormEstimate growth_bound_study(const std::vector<int>& ns, int vectors_per_level,
                                std::uint64_t seed) {
  NormEstimate est;
  est.op_tag = "nonlinear_growth";
  for (int n : ns) {
    auto ops = assemble_structured(n, 10);
    double worst = 0.0;
    for (int j = 0; j < vectors_per_level; ++j) {
      Eigen::VectorXd raw = keyed_gaussian_vector(ops->n_constrained(), seed, j + 1);
      Eigen::VectorXd v = project_coefficients(*ops, raw).v;
      double l2 = l2_norm(*ops, v);
      if (l2 == 0.0) continue;
      v /= l2;
      worst = std::max(worst, l2_norm(*ops, helmholtz_project(*ops, eval_nonlinear(*ops, v)).v));
    }
    est.levels.push_back(n);
    est.hs.push_back(ops->mesh->h);
    est.norms.push_back(worst);
  }
  est.fit();
  return est;
}

InfSupResult inf_sup_constant(const OperatorSet& ops) {
  const int n_p = ops.n_pressure();
  if (n_p > kDenseGuard) {
    throw std::invalid_argument("inf_sup_constant: pressure dimension exceeds dense guard");
  }
  Eigen::SimplicialLLT<SparseMat> llt(ops.K);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("inf_sup_constant: stiffness factorization failed");
  }
  Eigen::MatrixXd Bt = Eigen::MatrixXd(ops.B.transpose());
  Eigen::MatrixXd S = ops.B * llt.solve(Bt);
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::MatrixXd Mp = Eigen::MatrixXd(ops.Mp);

  Eigen::VectorXd w(n_p);
  lapack_check(LAPACKE_dsygvd(LAPACK_COL_MAJOR, 1, 'N', 'L', n_p, S.data(), n_p, Mp.data(),
                              n_p, w.data()),
               "inf_sup_constant");
  InfSupResult r;
  r.gauge_eigenvalue = w[0];  // constant-pressure mode
  r.beta_h = std::sqrt(std::max(0.0, w[1]));
  return r;
}

double estimate_kappa(NoiseModel& noise, int subdivisions, int quad_degree) {
  auto mesh = std::make_shared<Mesh>(build_structured_square(subdivisions));
  auto dofs = build_dofmap(*mesh);
  auto noise_ptr = std::make_shared<NoiseModel>(noise);
  OperatorSet ops = assemble(mesh, dofs, noise_ptr, quad_degree);
  if (ops.n_constrained() > 3000) {
    throw std::invalid_argument("estimate_kappa: constrained dof count exceeds dense guard 3000");
  }
  if (noise.N() == 0) {
    noise.kappa_estimate = 0.0;
    noise.kappa_warn = false;
    return 0.0;
  }

  Eigen::MatrixXd Z = divergence_free_basis(ops);
  const int m = static_cast<int>(Z.cols());
  Eigen::MatrixXd C(m, m);
  for (int j = 0; j < m; ++j) {
    C.col(j) = Z.transpose() * (ops.M * ito_correction(ops, Z.col(j)));
  }
  Eigen::MatrixXd A = Z.transpose() * (ops.K * Z);
  A = 0.5 * (A + A.transpose()).eval();
  // kappa = sigma_max(C A^{-1}): sup ||(1/2) sum L^2 v|| / ||A_h v||.
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  Eigen::MatrixXd X = llt.solve(C.transpose()).transpose();
  double kappa = X.bdcSvd().singularValues()[0];
  noise.kappa_estimate = kappa;
  noise.kappa_warn = kappa >= 1.0;
  if (noise.kappa_warn) {
    std::fprintf(stderr, "minisns: WARN: kappa_estimate = %.4f >= 1 (smallness violated "
                         "at the discrete level)\n", kappa);
  }
  return kappa;
}

}  // namespace minisns
