#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minisns/noise.hpp"
#include "minisns/operators.hpp"
#include "minisns/transfer.hpp"

namespace minisns {

// Dense-computation guard, in constrained dofs. Nominally ~4000; set with
// headroom so the gap-3 surrogate pair (coarse n=4, fine n=32) is admissible.
inline constexpr int kDenseGuard = 6500;

/// Eigenpairs of the constrained generalized problem K x = lambda M x on
/// {B x = 0}; vectors are M-orthonormal and discretely divergence-free.
struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;  // ascending, all positive
  Eigen::MatrixXd vectors;      // n x count

  int count() const { return static_cast<int>(eigenvalues.size()); }
};

/// Lowest `count` eigenpairs (count < 0: all) of the discrete Stokes
/// operator, by a dense method on the null-space-projected problem.
SpectralDecomposition stokes_eigendecomposition(const OperatorSet& ops, int count = -1);

/// Same, on the full constrained velocity space without the divergence
/// constraint (componentwise Dirichlet Laplacian); the H^s-norm surrogate
/// for non-solenoidal fields.
SpectralDecomposition dirichlet_eigendecomposition(const OperatorSet& ops, int count = -1);

struct FractionalResult {
  Eigen::VectorXd v;
  double truncation_residual = 0.0;  // M-relative part of the input outside the span
  bool imprecise = false;            // truncation residual above 1e-8
};

/// A_h^alpha v by spectral calculus on the resolved span, alpha in [-1, 1].
FractionalResult fractional_apply(const SpectralDecomposition& decomp, const OperatorSet& ops,
                                  double alpha, const Eigen::VectorXd& v);

/// Nested coarse/fine assemblies with their spectral decompositions; the
/// fine level stands in for the continuous operators.
struct SurrogatePair {
  std::shared_ptr<const OperatorSet> coarse;
  std::shared_ptr<const OperatorSet> fine;
  MeshTransfer transfer;
  SpectralDecomposition coarse_spec;  // full solenoidal spectrum
  SpectralDecomposition fine_spec;
  int coarse_subdivisions = 0;
  int gap = 0;

  double coarse_h() const { return coarse->mesh->h; }
};

/// coarse = structured square with `coarse_n` subdivisions, fine = `gap`
/// uniform refinements of it.
SurrogatePair build_surrogate_pair(int coarse_n, int gap, int quad_degree = 10);

/// J_{h,alpha} = A_h^alpha P_h A_fine^{-alpha} with its spectral
/// representation (coarse eigenbasis x fine eigenbasis).
struct SmoothingOperator {
  double alpha = 0.0;
  Eigen::MatrixXd J_hat;    // m_c x m_f, spectral coordinates
  Eigen::MatrixXd gram;     // <y_j, x_k>
  Eigen::MatrixXd gram_h1;  // <grad y_j, grad x_k>
  Eigen::MatrixXd dense;    // n_cc x n_cf, coefficient spaces
};

SmoothingOperator build_smoothing_operator(const SurrogatePair& pair, double alpha);

/// One measured operator norm with its mesh-size record.
struct NormEstimate {
  std::string op_tag;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  int gap = 0;
  std::vector<int> levels;       // coarse subdivision counts
  std::vector<double> hs;
  std::vector<double> norms;
  double slope = 0.0;            // log-log least squares, finest <= 4 levels

  void fit();
};

/// Least-squares slope of log(val) against log(h) over the finest
/// min(4, size) entries; requires >= 2 positive values.
double loglog_slope(const std::vector<double>& hs, const std::vector<double>& vals);

/// sigma_max of D_t^{gamma/2} Op D_s^{-beta/2} in the M-weighted geometry,
/// for an operator given in spectral coordinates.
double measure_operator_norm(const Eigen::MatrixXd& op_spectral,
                             const Eigen::VectorXd& source_eigs, double beta,
                             const Eigen::VectorXd& target_eigs, double gamma);

// --- Norm studies -----------------------------------------------------------

/// ||(I - P_h) v|| / ||v||_{H^2,fine} for smooth fields v = A_fine^{-1} w,
/// per coarse level (4.13-style projection rate).
NormEstimate projection_rate_study(const std::vector<int>& coarse_ns, int gap);

/// ||(A^{-1}P - A_h^{-1}P_h) f|| in L^2 and H^1 against the gap-fine
/// surrogate, for 5 smooth solenoidal loads (4.2-style approximation rate).
std::pair<NormEstimate, NormEstimate> stokes_approximation_study(const std::vector<int>& coarse_ns,
                                                                 int gap);

/// ||I - J_{h,alpha}||: source H^beta (fine), target L^2 ((4.24)-style) or
/// H^1 ((4.25)-style, beta = 2 - 2 alpha).
NormEstimate smoothing_error_study(const std::vector<int>& coarse_ns, int gap, double alpha,
                                   double beta, bool h1_target = false);

/// Commutator ||J A - A_h J||, source H^{2-2alpha} (fine), target H^{-1}
/// (coarse; the paper's H^{-2} target approximated at -1).
NormEstimate commutator_study(const std::vector<int>& coarse_ns, int gap, double alpha);

/// ||J P - P_h||, source H^{1-2alpha} or H^{-2alpha} on the full fine space,
/// target H^{-1} (coarse); (4.27)/(4.28)-style.
NormEstimate projection_pair_study(const std::vector<int>& coarse_ns, int gap, double alpha,
                                   bool low_source);

/// ||P_h (I - P)||, source H^theta on the full fine space, target H^{-1}
/// (coarse); (4.16)-style.
NormEstimate commuted_projection_study(const std::vector<int>& coarse_ns, int gap, double theta);

/// ||(P - P_h) v|| for random fields of fractional fine-space smoothness
/// theta; (4.17)-style.
NormEstimate projection_difference_study(const std::vector<int>& coarse_ns, int gap, double theta,
                                         int num_fields, std::uint64_t seed);

/// max over random solenoidal v of ||v||_{H^1} / ||v||_{L^2}; slope ~ -1
/// (inverse inequality).
NormEstimate inverse_inequality_study(const std::vector<int>& ns, int vectors_per_level,
                                      std::uint64_t seed);

/// max over random unit v of ||P_h G(v)|| (growth bound; slope >= -2.3).
NormEstimate growth_bound_study(const std::vector<int>& ns, int vectors_per_level,
                                std::uint64_t seed);

struct InfSupResult {
  double beta_h = 0.0;       // sqrt of smallest nonzero Schur eigenvalue
  double gauge_eigenvalue = 0.0;  // the excluded near-zero mode
};

InfSupResult inf_sup_constant(const OperatorSet& ops);

/// Discrete surrogate for the Hypothesis smallness constant: largest
/// generalized singular value of (1/2) sum L^2 against ||A_h .||, measured
/// densely at `subdivisions` (constrained dofs guarded at ~3000). Stamps
/// noise.kappa_estimate and the WARN flag.
double estimate_kappa(NoiseModel& noise, int subdivisions = 8, int quad_degree = 10);

}  // namespace minisns
