#include "minisns/experiments.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "minisns/operator_lab.hpp"
#include "minisns/transfer.hpp"

namespace minisns {

EocFit fit_eoc(const std::vector<double>& errors, const std::vector<double>& hs) {
  if (errors.size() != hs.size() || errors.size() < 2) {
    throw std::invalid_argument("fit_eoc: need >= 2 (error, h) pairs");
  }
  for (double e : errors) {
    if (!(e > 0.0)) throw std::invalid_argument("fit_eoc: errors must be positive");
  }
  EocFit fit;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    fit.pairwise.push_back(std::log(errors[i] / errors[i + 1]) / std::log(hs[i] / hs[i + 1]));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    double x = std::log(hs[i]), y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = double(errors.size());
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

Eigen::Vector2d builtin_field(const std::string& name, const Eigen::Vector2d& p) {
  if (name == "zero") return Eigen::Vector2d::Zero();
  if (name == "vortex") {
    const double pi = M_PI;
    double sx = std::sin(pi * p.x()), sy = std::sin(pi * p.y());
    return {sx * sx * std::sin(2 * pi * p.y()), -std::sin(2 * pi * p.x()) * sy * sy};
  }
  throw std::invalid_argument("builtin_field: unknown field '" + name + "'");
}

Eigen::Vector2d manufactured_forcing(const Eigen::Vector2d& p) {
  // -Laplacian of the vortex field; its steady Stokes solution is the vortex.
  const double pi = M_PI;
  double fx = -2 * pi * pi * std::sin(2 * pi * p.y()) * (2 * std::cos(2 * pi * p.x()) - 1);
  double fy = 2 * pi * pi * std::sin(2 * pi * p.x()) * (2 * std::cos(2 * pi * p.y()) - 1);
  return {fx, fy};
}

namespace {

struct LevelSetup {
  int level = 0;
  std::shared_ptr<const OperatorSet> ops;
  std::unique_ptr<Stepper> stepper;
  Eigen::VectorXd u0_dual;
  MeshTransfer to_reference;  // empty for the reference level itself
};

// Kahan-compensated accumulator.
struct Kahan {
  double sum = 0.0, c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

ErrorReport run_convergence_study(const StudyConfig& cfg) {
  if (cfg.levels.empty()) throw StudyError("study: no coarse levels given");
  for (int l : cfg.levels) {
    if (l >= cfg.reference_level) {
      throw StudyError("study: reference level must be strictly finer than every coarse level");
    }
  }
  if (cfg.noise.N() > 0 && cfg.flags.noise &&
      !(cfg.noise.kappa_estimate >= 0.0 && cfg.noise.kappa_estimate < 1.0)) {
    throw StudyError("study: kappa_estimate must be stamped and < 1 for the configured noise");
  }
  if (!(cfg.T > 0.0) || cfg.steps < 1 || cfg.samples < 1) {
    throw StudyError("study: T > 0, steps >= 1, samples >= 1 required");
  }

  const double dt = cfg.T / cfg.steps;
  auto noise = std::make_shared<NoiseModel>(cfg.noise);

  // Nested hierarchy from one base mesh.
  std::vector<std::shared_ptr<const Mesh>> meshes(cfg.reference_level + 1);
  {
    Mesh m = build_structured_square(1);
    meshes[0] = std::make_shared<Mesh>(m);
    for (int l = 1; l <= cfg.reference_level; ++l) {
      m = refine_uniform(m);
      meshes[l] = std::make_shared<Mesh>(m);
    }
  }

  auto make_setup = [&](int level) {
    LevelSetup s;
    s.level = level;
    auto dofs = build_dofmap(*meshes[level]);
    s.ops = std::make_shared<OperatorSet>(assemble(meshes[level], dofs, noise, cfg.quad_degree));
    s.stepper = std::make_unique<Stepper>(s.ops, dt, cfg.flags);
    s.u0_dual = assemble_load(*s.ops, [&](const Eigen::Vector2d& p) {
      return (cfg.u0_amplitude * builtin_field(cfg.u0_name, p)).eval();
    });
    return s;
  };

  LevelSetup reference = make_setup(cfg.reference_level);
  std::vector<LevelSetup> coarse;
  for (int l : cfg.levels) {
    coarse.push_back(make_setup(l));
    coarse.back().to_reference =
        build_transfer(coarse.back().ops, reference.ops, cfg.reference_level - l);
  }

  const int L = static_cast<int>(coarse.size());
  const int stride = std::max(1, cfg.snapshot_stride);

  // Per-sample statistics; NaN marks aborted samples.
  std::vector<std::vector<double>> max_l2_sq(L, std::vector<double>(cfg.samples, 0.0));
  std::vector<std::vector<double>> int_h1_sq(L, std::vector<double>(cfg.samples, 0.0));
  std::vector<std::uint8_t> aborted(cfg.samples, 0);
  std::vector<std::string> abort_log(cfg.samples);

  auto run_sample = [&](int s) {
    BrownianDriver path = sample_path(cfg.base_seed, s, cfg.steps, dt, cfg.noise.N());
    try {
      TrajectoryState ref_state = reference.stepper->initial_state(reference.u0_dual);
      std::vector<TrajectoryState> states;
      std::vector<Kahan> h1_acc(L);
      for (int l = 0; l < L; ++l) {
        states.push_back(coarse[l].stepper->initial_state(coarse[l].u0_dual));
        DiffNorms d0 = difference_norms(coarse[l].to_reference, states[l].u, ref_state.u);
        max_l2_sq[l][s] = d0.l2 * d0.l2;
      }
      for (int m = 0; m < cfg.steps; ++m) {
        reference.stepper->step(ref_state, path.increments.row(m));
        for (int l = 0; l < L; ++l) {
          coarse[l].stepper->step(states[l], path.increments.row(m));
          DiffNorms d = difference_norms(coarse[l].to_reference, states[l].u, ref_state.u);
          h1_acc[l].add(dt * d.h1 * d.h1);
          if ((m + 1) % stride == 0 || m + 1 == cfg.steps) {
            max_l2_sq[l][s] = std::max(max_l2_sq[l][s], d.l2 * d.l2);
          }
        }
      }
      for (int l = 0; l < L; ++l) int_h1_sq[l][s] = h1_acc[l].sum;
    } catch (const BlowUpError& e) {
      aborted[s] = 1;
      abort_log[s] = "sample " + std::to_string(s) + ": " + e.what();
    } catch (const SolveError& e) {
      aborted[s] = 1;
      abort_log[s] = "sample " + std::to_string(s) + ": " + e.what();
    }
  };

  if (cfg.threads <= 1) {
    for (int s = 0; s < cfg.samples; ++s) run_sample(s);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < cfg.threads; ++t) {
      pool.emplace_back([&] {
        for (int s = next.fetch_add(1); s < cfg.samples; s = next.fetch_add(1)) run_sample(s);
      });
    }
    for (auto& th : pool) th.join();
  }

  ErrorReport rep;
  rep.c_zeta = cfg.noise.C_zeta;
  rep.kappa_estimate = cfg.noise.kappa_estimate;
  for (int s = 0; s < cfg.samples; ++s) {
    if (aborted[s]) {
      rep.aborted_samples += 1;
      rep.aborted_log.push_back(abort_log[s]);
    } else {
      rep.completed_samples += 1;
    }
  }
  if (rep.aborted_samples > 0 && rep.aborted_samples * 10 > cfg.samples) {
    throw StudyError("study: more than 10% of samples aborted (" +
                     std::to_string(rep.aborted_samples) + "/" +
                     std::to_string(cfg.samples) + ")");
  }
  if (stride > 1) {
    rep.warn = "snapshot_stride > 1: the sup-in-time norm is sampled every " +
               std::to_string(stride) + " steps";
  }

  const int M = rep.completed_samples;
  // Sample means and standard errors in deterministic sample order; the
  // sqrt is handled by the delta method.
  auto aggregate = [&](const std::vector<double>& per_sample, double& value, double& se) {
    Kahan mean_acc;
    for (int s = 0; s < cfg.samples; ++s) {
      if (!aborted[s]) mean_acc.add(per_sample[s]);
    }
    double mean = mean_acc.sum / M;
    Kahan var_acc;
    for (int s = 0; s < cfg.samples; ++s) {
      if (!aborted[s]) var_acc.add((per_sample[s] - mean) * (per_sample[s] - mean));
    }
    double se_mean = M > 1 ? std::sqrt(var_acc.sum / (M - 1) / M) : 0.0;
    value = std::sqrt(std::max(0.0, mean));
    se = value > 0.0 ? se_mean / (2.0 * value) : 0.0;
  };

  bool all_zero = true;
  for (int l = 0; l < L; ++l) {
    LevelError le;
    le.level = coarse[l].level;
    le.h = coarse[l].ops->mesh->h;
    aggregate(max_l2_sq[l], le.e_c, le.se_c);
    aggregate(int_h1_sq[l], le.e_h1, le.se_h1);
    le.combined = le.e_c + le.e_h1;
    le.se_combined = le.se_c + le.se_h1;
    if (le.combined > 0.0) all_zero = false;
    rep.levels.push_back(le);
  }

  if (all_zero) {
    rep.fit.defined = false;
    rep.fit.slope = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::vector<double> errors, hs;
    for (const auto& le : rep.levels) {
      errors.push_back(le.combined);
      hs.push_back(le.h);
    }
    rep.fit = fit_eoc(errors, hs);
  }
  return rep;
}

std::vector<CheckResult> run_identity_checks(const std::vector<int>& levels,
                                             int vectors_per_level, std::uint64_t seed,
                                             const NoiseModel& noise, int quad_degree) {
  auto noise_ptr = std::make_shared<NoiseModel>(noise);
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, double rel) {
    auto [it, inserted] = worst.try_emplace(name, rel);
    if (!inserted) it->second = std::max(it->second, rel);
  };

  for (int level : levels) {
    auto mesh = std::make_shared<Mesh>(build_structured_square(1));
    for (int l = 0; l < level; ++l) *mesh = refine_uniform(*mesh);
    auto dofs = build_dofmap(*mesh);
    OperatorSet ops = assemble(mesh, dofs, noise_ptr, quad_degree);
    const int n_c = ops.n_constrained();

    for (int j = 0; j < vectors_per_level; ++j) {
      Eigen::VectorXd raw(n_c);
      for (int i = 0; i < n_c; ++i) raw[i] = gaussian_draw(seed, level, j + 1, i);

      // Projection identities on the raw datum.
      auto proj = project_coefficients(ops, raw);
      const Eigen::VectorXd& v = proj.v;
      {
        double f2 = raw.dot(ops.M * raw);
        double v2 = v.dot(ops.M * v);
        Eigen::VectorXd r = raw - v;
        double r2 = r.dot(ops.M * r);
        record("pythagoras", std::abs(f2 - v2 - r2) / f2);
        Eigen::VectorXd v2nd = project_coefficients(ops, v).v;
        record("idempotency", l2_norm(ops, v2nd - v) / l2_norm(ops, v));
        // Orthogonality of the remainder against members of the space.
        for (int k = 0; k < 3; ++k) {
          Eigen::VectorXd wraw(n_c);
          for (int i = 0; i < n_c; ++i) wraw[i] = gaussian_draw(seed ^ 0xabcd, level, 100 + k, i);
          Eigen::VectorXd w = project_coefficients(ops, wraw).v;
          double denom = l2_norm(ops, r) * l2_norm(ops, w);
          if (denom > 0) record("orthogonality", std::abs(r.dot(ops.M * w)) / denom);
        }
      }

      // Transport skew-symmetry, cancellation-scaled.
      for (int n = 0; n < noise.N(); ++n) {
        Eigen::VectorXd tv = ops.T[n] * v;
        double denom = 0.0;
        for (int k = 0; k < ops.T[n].outerSize(); ++k) {
          for (SparseMat::InnerIterator it(ops.T[n], k); it; ++it) {
            denom += std::abs(it.value() * v[it.row()] * v[it.col()]);
          }
        }
        if (denom > 0) record("skew_symmetry", std::abs(v.dot(tv)) / denom);
      }

      // Nonlinearity neutrality <G(v), v> = 0.
      {
        Eigen::VectorXd g = eval_nonlinear(ops, v);
        double denom = g.cwiseAbs().dot(v.cwiseAbs());
        if (denom > 0) record("nonlinearity_neutrality", std::abs(g.dot(v)) / denom);
      }

      if (noise.N() > 0) {
        // Per-mode quadratic-form identity and the Hilbert-Schmidt sum.
        double hs_sum = 0.0;
        for (int n = 0; n < noise.N(); ++n) {
          Eigen::VectorXd ln = apply_transport(ops, n, v);
          Eigen::VectorXd l2n = apply_transport(ops, n, ln);
          double lnorm2 = ln.dot(ops.M * ln);
          hs_sum += lnorm2;
          if (lnorm2 > 0) {
            record("ito_quadratic_form", std::abs(v.dot(ops.M * l2n) + lnorm2) / lnorm2);
          }
        }
        double hs_fn = hs_norm_sq(ops, v);
        if (hs_fn > 0) record("hs_consistency", std::abs(hs_sum - hs_fn) / hs_fn);

        // Energy coercivity relation.
        Eigen::VectorXd ito = ito_correction(ops, v);
        Eigen::VectorXd g = eval_nonlinear(ops, v);
        double t_visc = 2.0 * v.dot(ops.K * v);
        double t_ito = 2.0 * v.dot(ops.M * ito);
        double t_g = 2.0 * g.dot(v);
        double r = -t_visc + t_ito - t_g + hs_fn + t_visc;
        double denom = std::max({std::abs(t_visc), std::abs(t_ito), std::abs(t_g), hs_fn});
        if (denom > 0) record("coercivity_relation", std::abs(r) / denom);
      }
    }
  }

  std::vector<CheckResult> out;
  for (const auto& [name, rel] : worst) out.push_back({name, rel});
  return out;
}

NoiseModel noise_from_config(const Config& cfg) {
  std::string family = cfg.get("noise.family", "default4");
  double amplitude = cfg.get_double("noise.amplitude", 0.15);
  int modes = cfg.get_int("noise.modes", 4);
  NoiseModel model;
  if (family == "custom") {
    std::vector<StreamSpec> spec;
    for (int k = 1; k <= modes; ++k) {
      std::string base = "noise.mode" + std::to_string(k);
      if (!cfg.has(base + ".stream")) break;
      StreamSpec s;
      s.psi = named_stream(cfg.get(base + ".stream", ""));
      s.amplitude = cfg.get_double(base + ".amplitude", 1.0) * amplitude;
      spec.push_back(std::move(s));
    }
    model = build_noise_family(spec);
  } else {
    model = builtin_noise_family(family, amplitude, modes);
  }
  if (model.N() > 0 && cfg.get_bool("noise.estimate_kappa", true)) {
    estimate_kappa(model, cfg.get_int("noise.kappa_subdivisions", 8));
  }
  return model;
}

StudyConfig study_from_config(const Config& cfg) {
  StudyConfig sc;
  sc.levels = cfg.get_int_list("levels");
  if (sc.levels.empty()) sc.levels = {2, 3, 4, 5};
  sc.reference_level = cfg.get_int("reference_level", 6);
  sc.T = cfg.get_double("T", 0.25);
  sc.steps = cfg.get_int("steps", 128);
  sc.samples = cfg.get_int("samples", 16);
  sc.base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  sc.u0_name = cfg.get("u0", "vortex");
  sc.u0_amplitude = cfg.get_double("u0.amplitude", 1.0);
  sc.flags.nonlinearity = cfg.get_bool("nonlinearity", true);
  sc.flags.ito_correction = cfg.get_bool("ito_correction", true);
  sc.flags.noise = cfg.get_bool("noise_enabled", true);
  sc.snapshot_stride = cfg.get_int("snapshot_stride", 1);
  sc.threads = cfg.get_int("threads", 1);
  sc.quad_degree = cfg.get_int("quad_degree", 10);
  sc.noise = noise_from_config(cfg);
  return sc;
}

}  // namespace minisns
