#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "minisns/experiments.hpp"
#include "minisns/operator_lab.hpp"

#ifndef MINISNS_GIT_DESCRIBE
#define MINISNS_GIT_DESCRIBE "unknown"
#endif

namespace minisns {

namespace {

namespace fs = std::filesystem;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  int seed_override = -1;
  int threads = 1;
};

Config load_config(const GlobalOpts& g, bool required) {
  if (g.config_path.empty()) {
    if (required) throw std::runtime_error("missing --config <path>");
    return Config::from_string("");
  }
  return Config::from_file(g.config_path);
}

std::uint64_t effective_seed(const GlobalOpts& g, const Config& cfg) {
  if (g.seed_override >= 0) return static_cast<std::uint64_t>(g.seed_override);
  return static_cast<std::uint64_t>(cfg.get_int("seed", 1));
}

std::ofstream open_output(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  std::ofstream out(fs::path(g.out_dir) / name);
  if (!out) throw std::runtime_error("cannot open output file " + name);
  return out;
}

void write_manifest(const GlobalOpts& g, const Config& cfg, const NoiseModel& noise,
                    const std::string& extra = "") {
  auto out = open_output(g, "manifest.txt");
  out << "config_hash " << cfg.hash() << "\n";
  out << "C_zeta " << format_double(noise.C_zeta) << "\n";
  out << "kappa_estimate " << format_double(noise.kappa_estimate) << "\n";
  out << "git_describe " << MINISNS_GIT_DESCRIBE << "\n";
  if (!extra.empty()) out << extra;
}

std::shared_ptr<const Mesh> build_level_mesh(int level) {
  Mesh m = build_structured_square(1);
  for (int l = 0; l < level; ++l) m = refine_uniform(m);
  return std::make_shared<Mesh>(std::move(m));
}

void write_snapshot(const GlobalOpts& g, int level, int step, double t,
                    const Eigen::VectorXd& u) {
  char name[64];
  std::snprintf(name, sizeof(name), "snapshot_%06d.txt", step);
  auto out = open_output(g, name);
  out << "# minisns velocity coefficients level=" << level << " t=" << format_double(t)
      << " n=" << u.size() << "\n";
  for (int i = 0; i < u.size(); ++i) out << format_double(u[i]) << "\n";
}

Eigen::VectorXd u0_dual_from_config(const Config& cfg, const OperatorSet& ops) {
  std::string u0 = cfg.get("u0", "vortex");
  double amp = cfg.get_double("u0.amplitude", 1.0);
  if (u0.rfind("file:", 0) == 0) {
    std::ifstream in(u0.substr(5));
    if (!in) throw std::runtime_error("u0: cannot open coefficient file");
    std::string header;
    std::getline(in, header);
    Eigen::VectorXd coeffs(ops.n_constrained());
    for (int i = 0; i < coeffs.size(); ++i) {
      if (!(in >> coeffs[i])) throw std::runtime_error("u0: coefficient file too short");
    }
    return ops.M * (amp * coeffs);
  }
  return assemble_load(ops, [&](const Eigen::Vector2d& p) {
    return (amp * builtin_field(u0, p)).eval();
  });
}

int cmd_mesh_info(const GlobalOpts& g, int level, const std::string& dump_path) {
  auto mesh = build_level_mesh(level);
  validate_mesh(*mesh);
  auto dofs = build_dofmap(*mesh);
  std::cout << "level " << level << "\n"
            << "vertices " << mesh->num_vertices() << "\n"
            << "triangles " << mesh->num_triangles() << "\n"
            << "boundary_vertices " << mesh->num_boundary_vertices() << "\n"
            << "h " << format_double(mesh->h) << "\n"
            << "total_area " << format_double(mesh->total_area()) << "\n"
            << "shape_ratio " << format_double(mesh->shape_ratio()) << "\n"
            << "constrained_velocity_dofs " << dofs.num_constrained() << "\n"
            << "pressure_dofs " << dofs.num_pressure_dofs() << "\n";
  if (!dump_path.empty()) {
    std::ofstream out(dump_path);
    if (!out) throw std::runtime_error("mesh-info: cannot open dump file");
    write_mesh(*mesh, out);
  }
  return 0;
}

int cmd_check(const GlobalOpts& g, const Config& cfg, const std::string& dump_dir) {
  NoiseModel noise = noise_from_config(cfg);
  std::vector<int> levels = cfg.get_int_list("check.levels");
  if (levels.empty()) levels = {1, 2, 3, 4};
  int vectors = cfg.get_int("check.vectors", 20);
  auto t0 = std::chrono::steady_clock::now();
  auto results = run_identity_checks(levels, vectors, effective_seed(g, cfg), noise);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double tol = 1e-9;
  bool ok = true;
  for (const auto& r : results) {
    bool pass = r.worst_residual <= tol;
    ok = ok && pass;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << r.name << " worst relative residual "
              << format_double(r.worst_residual) << "\n";
  }
  std::cout << "elapsed_seconds " << format_double(elapsed) << "\n";

  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    auto mesh = build_level_mesh(levels.front());
    auto dofs = build_dofmap(*mesh);
    OperatorSet ops = assemble(mesh, dofs, std::make_shared<NoiseModel>(noise));
    auto dump = [&](const SparseMat& m, const std::string& name) {
      std::ofstream out(fs::path(dump_dir) / name);
      write_coordinate_format(m, out);
    };
    dump(ops.M, "mass.txt");
    dump(ops.K, "stiffness.txt");
    dump(ops.B, "divergence.txt");
    for (int n = 0; n < static_cast<int>(ops.T.size()); ++n) {
      dump(ops.T[n], "transport_" + std::to_string(n) + ".txt");
    }
  }
  return ok ? 0 : 1;
}

int cmd_simulate(const GlobalOpts& g, const Config& cfg) {
  NoiseModel noise = noise_from_config(cfg);
  int level = cfg.get_int("level", 3);
  double T = cfg.get_double("T", 0.25);
  int steps = cfg.get_int("steps", 128);
  int stride = cfg.get_int("snapshot_stride", 0);
  SimFlags flags;
  flags.nonlinearity = cfg.get_bool("nonlinearity", true);
  flags.ito_correction = cfg.get_bool("ito_correction", true);
  flags.noise = cfg.get_bool("noise_enabled", true);

  auto mesh = build_level_mesh(level);
  auto dofs = build_dofmap(*mesh, cfg.get("pressure_gauge", "mean_zero") == "pin"
                                      ? PressureGauge::Pin
                                      : PressureGauge::MeanZero);
  auto noise_ptr = std::make_shared<NoiseModel>(noise);
  auto ops = std::make_shared<OperatorSet>(assemble(mesh, dofs, noise_ptr,
                                                    cfg.get_int("quad_degree", 10)));
  Stepper stepper(ops, T / steps, flags);
  if (cfg.has("forcing") && cfg.get("forcing", "") == "manufactured") {
    stepper.set_forcing(assemble_load(*ops, manufactured_forcing));
  }

  BrownianDriver path = sample_path(effective_seed(g, cfg), cfg.get_int("sample_index", 0),
                                    steps, T / steps, noise.N());
  Trajectory traj = simulate(stepper, u0_dual_from_config(cfg, *ops), path, stride);

  auto out = open_output(g, "trajectory.csv");
  out << "# units: t in time units, norms in L2(domain); dissipation rule: "
      << traj.dissipation_rule << "\n";
  out << "step,t,l2_norm,h1_seminorm,energy_residual\n";
  for (const auto& row : traj.norms) {
    out << row.step << ',' << format_double(row.t) << ',' << format_double(row.l2_norm) << ','
        << format_double(row.h1_seminorm) << ',' << format_double(row.energy_residual) << "\n";
  }
  for (const auto& [step, u] : traj.snapshots) {
    write_snapshot(g, level, step, step * (T / steps), u);
  }
  write_manifest(g, cfg, noise);
  return 0;
}

int cmd_study(const GlobalOpts& g, const Config& cfg) {
  StudyConfig sc = study_from_config(cfg);
  if (g.seed_override >= 0) sc.base_seed = static_cast<std::uint64_t>(g.seed_override);
  if (g.threads > 1) sc.threads = g.threads;
  ErrorReport rep = run_convergence_study(sc);

  auto out = open_output(g, "study.csv");
  out << "# units: h in domain units, errors in L2(domain); dissipation rule: "
      << rep.dissipation_rule << "\n";
  out << "level,h,e_c,se_c,e_h1,se_h1,combined,se_combined,eoc_pair\n";
  for (std::size_t i = 0; i < rep.levels.size(); ++i) {
    const auto& le = rep.levels[i];
    out << le.level << ',' << format_double(le.h) << ',' << format_double(le.e_c) << ','
        << format_double(le.se_c) << ',' << format_double(le.e_h1) << ','
        << format_double(le.se_h1) << ',' << format_double(le.combined) << ','
        << format_double(le.se_combined) << ',';
    if (i + 1 < rep.levels.size() && rep.fit.defined) {
      out << format_double(rep.fit.pairwise[i]);
    } else {
      out << "nan";
    }
    out << "\n";
  }
  out << "# rho_hat " << (rep.fit.defined ? format_double(rep.fit.slope) : "undefined") << "\n";
  out << "# samples_completed " << rep.completed_samples << " aborted " << rep.aborted_samples
      << "\n";
  for (const auto& line : rep.aborted_log) out << "# aborted: " << line << "\n";
  if (!rep.warn.empty()) out << "# WARN " << rep.warn << "\n";

  std::ostringstream extra;
  extra << "rho_hat " << (rep.fit.defined ? format_double(rep.fit.slope) : "undefined") << "\n";
  extra << "samples_completed " << rep.completed_samples << "\n";
  write_manifest(g, cfg, sc.noise, extra.str());
  std::cout << "rho_hat " << (rep.fit.defined ? format_double(rep.fit.slope) : "undefined")
            << "\n";
  return 0;
}

void write_norm_rows(std::ostream& out, const NormEstimate& e) {
  for (std::size_t i = 0; i < e.levels.size(); ++i) {
    out << e.op_tag << ',' << format_double(e.alpha) << ',' << format_double(e.beta) << ','
        << format_double(e.gamma) << ',' << e.levels[i] << ',' << format_double(e.hs[i]) << ','
        << format_double(e.norms[i]) << ',' << format_double(e.slope) << "\n";
  }
}

int cmd_operator_lab(const GlobalOpts& g, const Config& cfg) {
  auto out = open_output(g, "operator_lab.csv");
  out << "# units: h in domain units; norms are operator norms in the named scales; "
         "level = subdivisions per side\n";
  out << "operator,alpha,beta,gamma,level,h,norm,fitted_slope\n";

  const std::vector<int> rate_levels = {2, 4, 8, 16};
  write_norm_rows(out, projection_rate_study(rate_levels, 2));
  auto [l2est, h1est] = stokes_approximation_study(rate_levels, 2);
  write_norm_rows(out, l2est);
  write_norm_rows(out, h1est);

  const std::vector<int> dense_levels = {2, 3, 4, 6};
  const double alpha = cfg.get_double("lab.alpha", 0.25);
  for (double beta : {0.5, 1.0}) {
    write_norm_rows(out, smoothing_error_study(dense_levels, 2, alpha, beta, false));
  }
  write_norm_rows(out, smoothing_error_study(dense_levels, 2, alpha, 2.0 - 2.0 * alpha, true));
  write_norm_rows(out, commutator_study(dense_levels, 2, alpha));

  const std::vector<int> small_levels = {2, 3, 4};
  write_norm_rows(out, projection_pair_study(small_levels, 2, alpha, false));
  write_norm_rows(out, projection_pair_study(small_levels, 2, alpha, true));
  write_norm_rows(out, commuted_projection_study(small_levels, 2, 0.0));
  write_norm_rows(out, commuted_projection_study(small_levels, 2, 1.0));
  write_norm_rows(out, projection_difference_study(small_levels, 2, 0.4, 10,
                                                   effective_seed(g, cfg)));

  write_norm_rows(out, inverse_inequality_study({2, 4, 8, 16, 32}, 20, effective_seed(g, cfg)));
  write_norm_rows(out, growth_bound_study({2, 4, 8, 16}, 20, effective_seed(g, cfg)));

  // Inf-sup constants as rows with gamma = beta = 0.
  {
    NormEstimate e;
    e.op_tag = "inf_sup";
    for (int level : {2, 3, 4, 5}) {
      int n = 1 << level;
      auto mesh = build_level_mesh(level);
      auto dofs = build_dofmap(*mesh);
      OperatorSet ops = assemble(mesh, dofs, nullptr);
      e.levels.push_back(n);
      e.hs.push_back(mesh->h);
      e.norms.push_back(inf_sup_constant(ops).beta_h);
    }
    e.fit();
    write_norm_rows(out, e);
  }

  NoiseModel noise = noise_from_config(cfg);
  write_manifest(g, cfg, noise);
  return 0;
}

int cmd_energy(const GlobalOpts& g, const Config& cfg) {
  NoiseModel noise = noise_from_config(cfg);
  int level = cfg.get_int("level", 3);
  double T = cfg.get_double("T", 0.5);
  std::vector<int> step_counts = cfg.get_int_list("energy.steps");
  if (step_counts.empty()) step_counts = {64, 128, 256, 512};
  int finest = *std::max_element(step_counts.begin(), step_counts.end());

  SimFlags flags;
  flags.nonlinearity = cfg.get_bool("nonlinearity", true);
  flags.ito_correction = cfg.get_bool("ito_correction", true);
  flags.noise = cfg.get_bool("noise_enabled", true);

  auto mesh = build_level_mesh(level);
  auto dofs = build_dofmap(*mesh);
  auto noise_ptr = std::make_shared<NoiseModel>(noise);
  auto ops = std::make_shared<OperatorSet>(assemble(mesh, dofs, noise_ptr));

  // One Brownian path on the finest grid, coarsened by dyadic summation.
  BrownianDriver fine_path = sample_path(effective_seed(g, cfg), 0, finest, T / finest,
                                         noise.N());

  auto out = open_output(g, "energy.csv");
  out << "# units: dt in time units; residual of the pathwise energy equality; "
         "dissipation rule: implicit-point\n";
  out << "steps,dt,max_energy_residual\n";
  std::vector<double> dts, residuals;
  for (int steps : step_counts) {
    if (finest % steps != 0) throw std::runtime_error("energy: step counts must divide evenly");
    BrownianDriver path = fine_path.coarsen(finest / steps);
    Stepper stepper(ops, T / steps, flags);
    Trajectory traj = simulate(stepper, u0_dual_from_config(cfg, *ops), path, 0);
    EnergyReport rep = energy_report(traj);
    out << steps << ',' << format_double(T / steps) << ','
        << format_double(rep.max_abs_residual) << "\n";
    dts.push_back(T / steps);
    residuals.push_back(rep.max_abs_residual);
  }
  if (residuals.size() >= 2 && *std::min_element(residuals.begin(), residuals.end()) > 0.0) {
    EocFit fit = fit_eoc(residuals, dts);
    out << "# temporal_order " << format_double(fit.slope) << "\n";
    std::cout << "temporal_order " << format_double(fit.slope) << "\n";
  }
  write_manifest(g, cfg, noise);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"MINI-element solver and operator laboratory for the 2D stochastic "
               "Navier-Stokes equations with transport noise"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "path to a key = value config file");
  app.add_option("--seed", g.seed_override, "override the config seed");
  app.add_option("--out", g.out_dir, "output directory (default .)");
  app.add_option("--threads", g.threads, "worker threads for sample-level parallelism");

  auto* mesh_info = app.add_subcommand("mesh-info", "print mesh statistics");
  int mi_level = 3;
  std::string mi_dump;
  mesh_info->add_option("--level", mi_level, "refinement level of the unit-square base");
  mesh_info->add_option("--dump", mi_dump, "write the plain-text mesh dump to this path");

  auto* check = app.add_subcommand("check", "run the algebraic identity suite");
  std::string dump_ops_dir;
  check->add_option("--dump-operators", dump_ops_dir, "write matrices in coordinate format");

  auto* simulate_cmd = app.add_subcommand("simulate", "one trajectory from a config file");
  auto* study = app.add_subcommand("study", "Monte Carlo strong-convergence study");
  auto* lab = app.add_subcommand("operator-lab", "operator-norm measurements");
  auto* energy = app.add_subcommand("energy", "energy-residual refinement in dt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (mesh_info->parsed()) return cmd_mesh_info(g, mi_level, mi_dump);
    Config cfg = load_config(g, simulate_cmd->parsed() || study->parsed());
    if (check->parsed()) return cmd_check(g, cfg, dump_ops_dir);
    if (simulate_cmd->parsed()) return cmd_simulate(g, cfg);
    if (study->parsed()) return cmd_study(g, cfg);
    if (lab->parsed()) return cmd_operator_lab(g, cfg);
    if (energy->parsed()) return cmd_energy(g, cfg);
  } catch (const std::exception& e) {
    std::cerr << "minisns: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace minisns
