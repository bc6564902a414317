#include "minisns/operators.hpp"

#include <cmath>
#include <ostream>

namespace minisns {

namespace {

using Triplet = Eigen::Triplet<double>;

Eigen::Vector2d physical_point(const Mesh& mesh, int t, const Eigen::Vector3d& bc) {
  const auto& tri = mesh.triangles[t];
  return bc[0] * mesh.vertices[tri[0]] + bc[1] * mesh.vertices[tri[1]] +
         bc[2] * mesh.vertices[tri[2]];
}

// Scalar node ids of the 4 local shapes on element t.
std::array<int, 4> local_nodes(const Mesh& mesh, const DofMap& dofs, int t) {
  const auto& tri = mesh.triangles[t];
  return {tri[0], tri[1], tri[2], dofs.num_vertices + t};
}

}  // namespace

SaddleSolver::SaddleSolver(const OperatorSet& ops, double mass_coeff, double stiffness_coeff) {
  n_v_ = ops.n_constrained();
  n_p_ = ops.n_pressure();
  gauge_ = ops.dofs.gauge;
  pinned_ = ops.dofs.pinned_pressure_dof;

  SparseMat A = mass_coeff * ops.M;
  if (stiffness_coeff != 0.0) A = A + stiffness_coeff * ops.K;

  const bool mean_zero = (gauge_ == PressureGauge::MeanZero);
  const int np_sys = mean_zero ? n_p_ : n_p_ - 1;
  const int dim = n_v_ + np_sys + (mean_zero ? 1 : 0);

  // Pressure dof -> system column; the pinned dof is eliminated.
  auto pcol = [&](int p) {
    if (mean_zero) return n_v_ + p;
    if (p == pinned_) return -1;
    return n_v_ + (p < pinned_ ? p : p - 1);
  };

  std::vector<Triplet> trip;
  trip.reserve(A.nonZeros() + 2 * ops.B.nonZeros() + 2 * n_p_ + 4);
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(A, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int k = 0; k < ops.B.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(ops.B, k); it; ++it) {
      int pc = pcol(it.row());
      if (pc < 0) continue;
      trip.emplace_back(pc, it.col(), it.value());  // B
      trip.emplace_back(it.col(), pc, it.value());  // B^T
    }
  }
  if (mean_zero) {
    const int gc = n_v_ + n_p_;
    for (int p = 0; p < n_p_; ++p) {
      trip.emplace_back(n_v_ + p, gc, ops.gauge[p]);
      trip.emplace_back(gc, n_v_ + p, ops.gauge[p]);
    }
  }
  system_.resize(dim, dim);
  system_.setFromTriplets(trip.begin(), trip.end());
  system_.makeCompressed();

  lu_.analyzePattern(system_);
  lu_.factorize(system_);
  if (lu_.info() != Eigen::Success) {
    throw SolveError("SaddleSolver: factorization failed", -1.0);
  }
}

SaddleSolver::Result SaddleSolver::solve(const Eigen::VectorXd& dual_rhs) const {
  if (dual_rhs.size() != n_v_) {
    throw std::invalid_argument("SaddleSolver::solve: rhs size mismatch");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(system_.rows());
  rhs.head(n_v_) = dual_rhs;
  Eigen::VectorXd x = lu_.solve(rhs);

  double rhs_norm = rhs.norm();
  double residual = (system_ * x - rhs).norm() / (rhs_norm > 0 ? rhs_norm : 1.0);
  if (!(residual < 1e-10) || !x.allFinite()) {
    throw SolveError("SaddleSolver: relative residual " + std::to_string(residual), residual);
  }

  Result r;
  r.v = x.head(n_v_);
  r.residual = residual;
  if (gauge_ == PressureGauge::MeanZero) {
    r.q = x.segment(n_v_, n_p_);
    r.gauge_multiplier = x[n_v_ + n_p_];
  } else {
    r.q = Eigen::VectorXd::Zero(n_p_);
    for (int p = 0, col = 0; p < n_p_; ++p) {
      if (p == pinned_) continue;
      r.q[p] = x[n_v_ + col++];
    }
    r.gauge_multiplier = 0.0;
  }
  return r;
}

OperatorSet assemble(std::shared_ptr<const Mesh> mesh, const DofMap& dofs,
                     std::shared_ptr<const NoiseModel> noise, int quad_degree) {
  OperatorSet ops;
  ops.mesh = mesh;
  ops.dofs = dofs;
  ops.noise = noise;
  ops.table = tabulate(make_quadrature(std::max(quad_degree, 10)));

  const Mesh& m = *mesh;
  const int nt = m.num_triangles();
  const int n_c = dofs.num_constrained();
  const int n_p = dofs.num_pressure_dofs();
  const int n_modes = noise ? noise->N() : 0;

  ops.geometry.reserve(nt);
  for (int t = 0; t < nt; ++t) ops.geometry.push_back(element_geometry(m, t));

  // Exact rule for the transport terms: zeta + grad(shape) + shape.
  ShapeTable ttable;
  if (n_modes > 0) {
    ttable = tabulate(make_quadrature(std::max(quad_degree, noise->max_degree() + 5)));
  }

  std::vector<Triplet> tm, tk, tb, tmp;
  std::vector<std::vector<Triplet>> tt(n_modes);
  Eigen::VectorXd gauge = Eigen::VectorXd::Zero(n_p);

  for (int t = 0; t < nt; ++t) {
    const auto& geo = ops.geometry[t];
    const auto nodes = local_nodes(m, dofs, t);
    const double detJ = geo.det_jacobian;

    Eigen::Matrix4d m_loc = Eigen::Matrix4d::Zero();
    Eigen::Matrix4d k_loc = Eigen::Matrix4d::Zero();
    // b_loc(p, 2*j + c) = int lambda_p d_c s_j
    Eigen::Matrix<double, 3, 8> b_loc = Eigen::Matrix<double, 3, 8>::Zero();
    Eigen::Matrix3d mp_loc = Eigen::Matrix3d::Zero();

    const auto& tab = ops.table;
    for (int q = 0; q < tab.rule.size(); ++q) {
      const double wq = tab.rule.weights[q] * detJ;
      std::array<Eigen::Vector2d, 4> grad;
      for (int j = 0; j < 4; ++j) grad[j] = geo.inv_jacobian_T * tab.ref_grad[q][j];
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          m_loc(i, j) += wq * tab.value[q][i] * tab.value[q][j];
          k_loc(i, j) += wq * grad[i].dot(grad[j]);
        }
      }
      for (int p = 0; p < 3; ++p) {
        for (int j = 0; j < 4; ++j) {
          for (int c = 0; c < 2; ++c) {
            b_loc(p, 2 * j + c) += wq * tab.value[q][p] * grad[j][c];
          }
        }
        for (int r = 0; r < 3; ++r) mp_loc(p, r) += wq * tab.value[q][p] * tab.value[q][r];
      }
    }

    auto scatter_velocity = [&](std::vector<Triplet>& out, int ni, int nj, int c, double val) {
      int gi = dofs.constrained_index[DofMap::velocity_dof(ni, c)];
      int gj = dofs.constrained_index[DofMap::velocity_dof(nj, c)];
      if (gi >= 0 && gj >= 0) out.emplace_back(gi, gj, val);
    };
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        for (int c = 0; c < 2; ++c) {
          scatter_velocity(tm, nodes[i], nodes[j], c, m_loc(i, j));
          scatter_velocity(tk, nodes[i], nodes[j], c, k_loc(i, j));
        }
      }
    }
    const auto& tri = m.triangles[t];
    for (int p = 0; p < 3; ++p) {
      for (int j = 0; j < 4; ++j) {
        for (int c = 0; c < 2; ++c) {
          int gj = dofs.constrained_index[DofMap::velocity_dof(nodes[j], c)];
          if (gj >= 0) tb.emplace_back(tri[p], gj, b_loc(p, 2 * j + c));
        }
      }
      gauge[tri[p]] += detJ * barycentric_moment(1, 0, 0);  // area/3
      for (int r = 0; r < 3; ++r) tmp.emplace_back(tri[p], tri[r], mp_loc(p, r));
    }

    for (int n = 0; n < n_modes; ++n) {
      Eigen::Matrix4d t_loc = Eigen::Matrix4d::Zero();
      for (int q = 0; q < ttable.rule.size(); ++q) {
        const double wq = ttable.rule.weights[q] * detJ;
        const Eigen::Vector2d x = physical_point(m, t, ttable.rule.points[q]);
        const Eigen::Vector2d zeta = noise->modes[n].eval(x);
        std::array<Eigen::Vector2d, 4> grad;
        for (int j = 0; j < 4; ++j) grad[j] = geo.inv_jacobian_T * ttable.ref_grad[q][j];
        for (int i = 0; i < 4; ++i) {
          for (int j = 0; j < 4; ++j) {
            t_loc(i, j) += wq * ttable.value[q][i] * zeta.dot(grad[j]);
          }
        }
      }
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          for (int c = 0; c < 2; ++c) {
            scatter_velocity(tt[n], nodes[i], nodes[j], c, t_loc(i, j));
          }
        }
      }
    }
  }

  ops.M.resize(n_c, n_c);
  ops.M.setFromTriplets(tm.begin(), tm.end());
  ops.K.resize(n_c, n_c);
  ops.K.setFromTriplets(tk.begin(), tk.end());
  ops.B.resize(n_p, n_c);
  ops.B.setFromTriplets(tb.begin(), tb.end());
  ops.Mp.resize(n_p, n_p);
  ops.Mp.setFromTriplets(tmp.begin(), tmp.end());
  ops.gauge = gauge;
  ops.T.resize(n_modes);
  for (int n = 0; n < n_modes; ++n) {
    ops.T[n].resize(n_c, n_c);
    ops.T[n].setFromTriplets(tt[n].begin(), tt[n].end());
  }

  ops.mass_solver = std::make_shared<SaddleSolver>(ops, 1.0, 0.0);
  return ops;
}

namespace {

SparseMat assemble_full(const Mesh& mesh, const DofMap& dofs, int quad_degree, bool stiffness) {
  ShapeTable tab = tabulate(make_quadrature(std::max(quad_degree, 10)));
  std::vector<Triplet> trip;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const auto nodes = local_nodes(mesh, dofs, t);
    Eigen::Matrix4d loc = Eigen::Matrix4d::Zero();
    for (int q = 0; q < tab.rule.size(); ++q) {
      const double wq = tab.rule.weights[q] * geo.det_jacobian;
      std::array<Eigen::Vector2d, 4> grad;
      for (int j = 0; j < 4; ++j) grad[j] = geo.inv_jacobian_T * tab.ref_grad[q][j];
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          loc(i, j) += stiffness ? wq * grad[i].dot(grad[j])
                                 : wq * tab.value[q][i] * tab.value[q][j];
        }
      }
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        for (int c = 0; c < 2; ++c) {
          trip.emplace_back(DofMap::velocity_dof(nodes[i], c),
                            DofMap::velocity_dof(nodes[j], c), loc(i, j));
        }
      }
    }
  }
  SparseMat out(dofs.num_velocity_dofs(), dofs.num_velocity_dofs());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace

SparseMat assemble_full_mass(const Mesh& mesh, const DofMap& dofs, int quad_degree) {
  return assemble_full(mesh, dofs, quad_degree, false);
}

SparseMat assemble_full_stiffness(const Mesh& mesh, const DofMap& dofs, int quad_degree) {
  return assemble_full(mesh, dofs, quad_degree, true);
}

ProjectionResult helmholtz_project(const OperatorSet& ops, const Eigen::VectorXd& dual_rhs) {
  auto r = ops.mass_solver->solve(dual_rhs);
  return {std::move(r.v), std::move(r.q)};
}

ProjectionResult project_coefficients(const OperatorSet& ops, const Eigen::VectorXd& coeffs) {
  return helmholtz_project(ops, ops.M * coeffs);
}

Eigen::VectorXd apply_discrete_stokes(const OperatorSet& ops, const Eigen::VectorXd& v) {
  double dres = div_residual(ops, v);
  if (dres > 1e-8) {
    throw std::invalid_argument("apply_discrete_stokes: input not discretely divergence-free "
                                "(relative div residual " + std::to_string(dres) + ")");
  }
  return helmholtz_project(ops, ops.K * v).v;
}

Eigen::VectorXd apply_transport(const OperatorSet& ops, int mode, const Eigen::VectorXd& v) {
  if (mode < 0 || mode >= static_cast<int>(ops.T.size())) {
    throw std::invalid_argument("apply_transport: mode out of range");
  }
  return helmholtz_project(ops, ops.T[mode] * v).v;
}

Eigen::VectorXd ito_correction(const OperatorSet& ops, const Eigen::VectorXd& v) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(v.size());
  for (int n = 0; n < static_cast<int>(ops.T.size()); ++n) {
    acc += apply_transport(ops, n, apply_transport(ops, n, v));
  }
  return 0.5 * acc;
}

Eigen::VectorXd eval_nonlinear(const OperatorSet& ops, const Eigen::VectorXd& v) {
  const Mesh& m = *ops.mesh;
  const DofMap& dofs = ops.dofs;
  Eigen::VectorXd dual = Eigen::VectorXd::Zero(ops.n_constrained());

  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& geo = ops.geometry[t];
    const auto nodes = local_nodes(m, dofs, t);
    // Local coefficients; boundary dofs carry zero.
    Eigen::Matrix<double, 4, 2> coeff = Eigen::Matrix<double, 4, 2>::Zero();
    std::array<std::array<int, 2>, 4> cdof{};
    for (int j = 0; j < 4; ++j) {
      for (int c = 0; c < 2; ++c) {
        int g = dofs.constrained_index[DofMap::velocity_dof(nodes[j], c)];
        cdof[j][c] = g;
        if (g >= 0) coeff(j, c) = v[g];
      }
    }

    Eigen::Matrix<double, 4, 2> local = Eigen::Matrix<double, 4, 2>::Zero();
    const auto& tab = ops.table;
    for (int q = 0; q < tab.rule.size(); ++q) {
      const double wq = tab.rule.weights[q] * geo.det_jacobian;
      std::array<Eigen::Vector2d, 4> grad;
      for (int j = 0; j < 4; ++j) grad[j] = geo.inv_jacobian_T * tab.ref_grad[q][j];

      Eigen::Vector2d u = Eigen::Vector2d::Zero();
      Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();  // gu(c, d) = d u_c / d x_d
      for (int j = 0; j < 4; ++j) {
        for (int c = 0; c < 2; ++c) {
          u[c] += coeff(j, c) * tab.value[q][j];
          gu.row(c) += coeff(j, c) * grad[j].transpose();
        }
      }
      const double div = gu.trace();
      const Eigen::Vector2d conv = gu * u;  // (u . grad) u
      for (int i = 0; i < 4; ++i) {
        for (int c = 0; c < 2; ++c) {
          local(i, c) += wq * (conv[c] + 0.5 * div * u[c]) * tab.value[q][i];
        }
      }
    }
    for (int i = 0; i < 4; ++i) {
      for (int c = 0; c < 2; ++c) {
        if (cdof[i][c] >= 0) dual[cdof[i][c]] += local(i, c);
      }
    }
  }
  return dual;
}

double hs_norm_sq(const OperatorSet& ops, const Eigen::VectorXd& v) {
  double s = 0.0;
  for (int n = 0; n < static_cast<int>(ops.T.size()); ++n) {
    Eigen::VectorXd ln = apply_transport(ops, n, v);
    s += ln.dot(ops.M * ln);
  }
  return s;
}

double l2_norm(const OperatorSet& ops, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(ops.M * v)));
}

double h1_seminorm(const OperatorSet& ops, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(ops.K * v)));
}

double div_residual(const OperatorSet& ops, const Eigen::VectorXd& v) {
  double vn = v.norm();
  if (vn == 0.0) return 0.0;
  return (ops.B * v).norm() / vn;
}

Eigen::VectorXd assemble_load(const OperatorSet& ops,
                              const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& f) {
  const Mesh& m = *ops.mesh;
  const DofMap& dofs = ops.dofs;
  Eigen::VectorXd dual = Eigen::VectorXd::Zero(ops.n_constrained());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& geo = ops.geometry[t];
    const auto nodes = local_nodes(m, dofs, t);
    const auto& tab = ops.table;
    for (int q = 0; q < tab.rule.size(); ++q) {
      const double wq = tab.rule.weights[q] * geo.det_jacobian;
      const Eigen::Vector2d fx = f(physical_point(m, t, tab.rule.points[q]));
      for (int i = 0; i < 4; ++i) {
        for (int c = 0; c < 2; ++c) {
          int g = dofs.constrained_index[DofMap::velocity_dof(nodes[i], c)];
          if (g >= 0) dual[g] += wq * fx[c] * tab.value[q][i];
        }
      }
    }
  }
  return dual;
}

void write_coordinate_format(const SparseMat& m, std::ostream& os) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(m, k); it; ++it) {
      os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

}  // namespace minisns
