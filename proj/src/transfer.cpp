#include "minisns/transfer.hpp"

#include <cmath>
#include <stdexcept>

namespace minisns {

namespace {

int ipow4(int g) {
  int r = 1;
  for (int i = 0; i < g; ++i) r *= 4;
  return r;
}

}  // namespace

MeshTransfer build_transfer(std::shared_ptr<const OperatorSet> coarse,
                            std::shared_ptr<const OperatorSet> fine, int gap) {
  MeshTransfer tr;
  tr.coarse = std::move(coarse);
  tr.fine = std::move(fine);
  tr.gap = gap;
  const Mesh& mc = *tr.coarse->mesh;
  const Mesh& mf = *tr.fine->mesh;
  const int stride = ipow4(gap);
  if (mf.num_triangles() != mc.num_triangles() * stride) {
    throw std::invalid_argument("build_transfer: fine mesh is not a gap-fold refinement");
  }

  // Degree 6 covers products of two cubic shapes; gradients are degree <= 4.
  const ShapeTable tab = tabulate(make_quadrature(6));
  const DofMap& dc = tr.coarse->dofs;
  const DofMap& df = tr.fine->dofs;

  std::vector<Eigen::Triplet<double>> tmass, tstiff;
  tmass.reserve(static_cast<std::size_t>(mf.num_triangles()) * 32);
  tstiff.reserve(static_cast<std::size_t>(mf.num_triangles()) * 32);

  for (int tf = 0; tf < mf.num_triangles(); ++tf) {
    const int tc = tf / stride;
    const auto geo_f = tr.fine->geometry[tf];
    const auto geo_c = tr.coarse->geometry[tc];
    const Eigen::Matrix2d inv_jc = geo_c.inv_jacobian_T.transpose();

    const auto& tri_f = mf.triangles[tf];
    const auto& tri_c = mc.triangles[tc];
    const std::array<int, 4> nodes_f = {tri_f[0], tri_f[1], tri_f[2], df.num_vertices + tf};
    const std::array<int, 4> nodes_c = {tri_c[0], tri_c[1], tri_c[2], dc.num_vertices + tc};

    for (int q = 0; q < tab.rule.size(); ++q) {
      const double wq = tab.rule.weights[q] * geo_f.det_jacobian;
      const auto& bc_f = tab.rule.points[q];
      const Eigen::Vector2d x = geo_f.origin + geo_f.jacobian * Eigen::Vector2d(bc_f[1], bc_f[2]);
      // Coarse barycentric coordinates of x; clamp roundoff at the simplex edge.
      Eigen::Vector2d ref_c = inv_jc * (x - geo_c.origin);
      Eigen::Vector3d bc_c(1.0 - ref_c[0] - ref_c[1], ref_c[0], ref_c[1]);
      for (int k = 0; k < 3; ++k) bc_c[k] = std::max(bc_c[k], 0.0);
      bc_c /= bc_c.sum();

      const ShapeEval ec = evaluate_local_basis(bc_c);
      std::array<Eigen::Vector2d, 4> grad_c, grad_f;
      for (int j = 0; j < 4; ++j) {
        grad_c[j] = geo_c.inv_jacobian_T * ec.ref_grad[j];
        grad_f[j] = geo_f.inv_jacobian_T * tab.ref_grad[q][j];
      }
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          const double mv = wq * ec.value[i] * tab.value[q][j];
          const double kv = wq * grad_c[i].dot(grad_f[j]);
          for (int c = 0; c < 2; ++c) {
            int gi = dc.constrained_index[DofMap::velocity_dof(nodes_c[i], c)];
            int gj = df.constrained_index[DofMap::velocity_dof(nodes_f[j], c)];
            if (gi >= 0 && gj >= 0) {
              tmass.emplace_back(gi, gj, mv);
              tstiff.emplace_back(gi, gj, kv);
            }
          }
        }
      }
    }
  }

  tr.mixed_mass.resize(dc.num_constrained(), df.num_constrained());
  tr.mixed_mass.setFromTriplets(tmass.begin(), tmass.end());
  tr.mixed_stiffness.resize(dc.num_constrained(), df.num_constrained());
  tr.mixed_stiffness.setFromTriplets(tstiff.begin(), tstiff.end());
  return tr;
}

DiffNorms difference_norms(const MeshTransfer& tr, const Eigen::VectorXd& u_coarse,
                           const Eigen::VectorXd& u_fine) {
  const auto& oc = *tr.coarse;
  const auto& of = *tr.fine;
  DiffNorms d;
  double l2 = u_coarse.dot(oc.M * u_coarse) - 2.0 * u_coarse.dot(tr.mixed_mass * u_fine) +
              u_fine.dot(of.M * u_fine);
  double h1 = u_coarse.dot(oc.K * u_coarse) - 2.0 * u_coarse.dot(tr.mixed_stiffness * u_fine) +
              u_fine.dot(of.K * u_fine);
  d.l2 = std::sqrt(std::max(0.0, l2));
  d.h1 = std::sqrt(std::max(0.0, h1));
  return d;
}

Eigen::VectorXd project_to_coarse(const MeshTransfer& tr, const Eigen::VectorXd& u_fine) {
  return helmholtz_project(*tr.coarse, tr.mixed_mass * u_fine).v;
}

Eigen::VectorXd lift_to_fine(const MeshTransfer& tr, const Eigen::VectorXd& u_coarse) {
  return helmholtz_project(*tr.fine, tr.mixed_mass.transpose() * u_coarse).v;
}

}  // namespace minisns
