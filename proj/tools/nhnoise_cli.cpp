#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "nhnoise/nhnoise.hpp"

namespace {

using namespace nhnoise;

struct Global {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string format = "json";
  std::optional<double> photon_number;
  double photon_scale = 1.0;
};

/// Model document from --config with the --seed override applied.
LatticeSpec load_model(const Global& g) {
  if (g.config.empty()) throw ConfigError("--config PATH is required for this command");
  json doc = read_json_file(g.config);
  if (doc.is_object() && doc.contains("scenario") && doc.contains("model")) doc = doc["model"];
  if (g.seed) doc["rng_seed"] = *g.seed;
  try {
    LatticeSpec s = spec_from_json(doc);
    if (g.photon_scale != 1.0) s = with_photon_scale(s, g.photon_scale);
    require_valid(s, g.config.c_str());
    return s;
  } catch (const ConfigError& e) {
    throw ConfigError(g.config + ": " + e.what());
  }
}

struct State {
  LatticeSpec spec;
  SteadyState steady;
};

/// Steady state from time marching, or the uniform periodic state at
/// --photon-number when given.
State steady_state(const Global& g) {
  const LatticeSpec s = load_model(g);
  if (g.photon_number) {
    const UniformState u = uniform_state_at(s, *g.photon_number);
    if (!u.steady.converged) throw NumericalError("photon number " + fmt17(*g.photon_number) + " is not a root");
    return {u.spec, u.steady};
  }
  SteadyState ss = find_steady_state(s);
  if (!ss.converged) throw NumericalError("steady state did not converge: " + ss.diagnostic);
  return {s, ss};
}

double photon_number_of(const State& st) { return st.steady.photon_numbers.mean(); }

void emit(const Global& g, const std::string& stem, const json& j, const std::string& csv) {
  if (g.format == "csv") {
    write_atomic(g.out + "/" + stem + ".csv", csv);
    std::cout << g.out << "/" << stem << ".csv\n";
  } else {
    write_json(g.out + "/" + stem + ".json", j);
    std::cout << json_text(j);
  }
}

cplx parse_complex(const std::string& text) {
  std::stringstream ss(text);
  double re = 0.0, im = 0.0;
  char comma = 0;
  if (!(ss >> re >> comma >> im) || comma != ',') throw ConfigError("--ref expects RE,IM (got '" + text + "')");
  return {re, im};
}

int cmd_steady(const Global& g) {
  const State st = steady_state(g);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < st.steady.alpha.size(); ++i)
    rows.push_back({static_cast<double>(i), st.steady.alpha[i].real(), st.steady.alpha[i].imag(),
                    st.steady.photon_numbers[i]});
  emit(g, "steady_state", steady_state_json(st.steady), table_csv({"site", "re", "im", "n"}, rows));
  return 0;
}

int cmd_sweep(const Global& g, double lo, double hi, std::size_t count, std::size_t k_count) {
  const LatticeSpec s = load_model(g);
  const auto sweep = sweep_flux(s, log_grid(lo, hi, count), k_count);
  json arr = json::array();
  std::vector<std::vector<double>> rows;
  for (const auto& f : sweep) {
    json roots = json::array();
    for (const auto& r : f.roots) {
      roots.push_back({{"n", r.n},
                       {"stable", r.stable},
                       {"max_im_lambda", r.max_im_lambda},
                       {"braid", r.braid ? json(*r.braid) : json(nullptr)}});
      rows.push_back({f.flux, r.n, r.stable ? 1.0 : 0.0, r.max_im_lambda,
                      r.braid ? static_cast<double>(*r.braid) : std::nan("")});
    }
    arr.push_back({{"flux", f.flux}, {"roots", roots}});
  }
  const json j = {{"sweep", arr}, {"stable_braid_sequence", stable_braid_sequence(sweep)}};
  emit(g, "sweep", j, table_csv({"flux", "n", "stable", "max_im_lambda", "braid"}, rows));
  return 0;
}

int cmd_transient(const Global& g, double t_end, std::size_t n_out, std::optional<std::size_t> site, double epsilon) {
  if (site) {
    const State st = steady_state(g);
    const ResponseMap r = perturbation_response(st.spec, st.steady, *site, epsilon, t_end, n_out);
    std::vector<std::string> header{"t"};
    for (Eigen::Index i = 0; i < r.values.cols(); ++i) header.push_back("dn_" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    json vals = json::array();
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      std::vector<double> row{r.times[k]};
      for (Eigen::Index i = 0; i < r.values.cols(); ++i) row.push_back(r.values(static_cast<Eigen::Index>(k), i));
      vals.push_back(std::vector<double>(row.begin() + 1, row.end()));
      rows.push_back(std::move(row));
    }
    const json j = {{"times", r.times}, {"response", vals}, {"chirality_ratio", chirality_ratio(r, *site)}};
    emit(g, "response", j, table_csv(header, rows));
    return 0;
  }
  const LatticeSpec s = load_model(g);
  TransientOptions o;
  o.n_out = n_out;
  const Trajectory tr = integrate_transient(s, CVec::Zero(static_cast<Eigen::Index>(s.n_sites)), t_end, o);
  json states = json::array();
  for (const auto& x : tr.states) states.push_back(complex_json(x));
  emit(g, "transient", {{"times", tr.times}, {"alpha", states}}, trajectory_csv(tr));
  return 0;
}

int cmd_noise(const Global& g) {
  const State st = steady_state(g);
  const NoiseSystem sys = make_noise_system(st.spec, st.steady);
  const MomentMatrix m = solve_lyapunov(sys);
  const auto noise = site_noise(m, st.steady);
  json sites = json::array();
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    sites.push_back({{"n", noise[i].photon_number}, {"intensity_db", noise[i].intensity_db}, {"phase_db", noise[i].phase_db}});
    rows.push_back({static_cast<double>(i), noise[i].photon_number, noise[i].intensity_db, noise[i].phase_db});
  }
  const json j = {{"steady_state", steady_state_json(st.steady)},
                  {"max_im_lambda", is_stable(sys).max_im_lambda},
                  {"sites", sites}};
  emit(g, "noise", j, table_csv({"site", "n", "intensity_db", "phase_db"}, rows));
  return 0;
}

int cmd_spectrum(const Global& g, std::size_t k_count) {
  const State st = steady_state(g);
  const NoiseSystem sys = make_noise_system(st.spec, st.steady);
  std::vector<LabeledEigenvalues> sets{{noise_spectrum(sys), to_string(st.spec.boundary)}};
  json j = {{"eigenvalues", complex_json(sets[0].values)}, {"boundary", sets[0].boundary},
            {"max_im_lambda", is_stable(sys).max_im_lambda}};
  if (st.spec.periodic() && is_uniform(st.spec)) {
    const BandSet b = pbc_bands(st.spec, photon_number_of(st), k_count);
    CVec pts(static_cast<Eigen::Index>(2 * b.bands.size()));
    for (std::size_t k = 0; k < b.bands.size(); ++k) {
      pts[static_cast<Eigen::Index>(2 * k)] = b.bands[k][0];
      pts[static_cast<Eigen::Index>(2 * k + 1)] = b.bands[k][1];
    }
    sets.push_back({pts, "bands"});
    j["bands"] = complex_json(pts);
  }
  emit(g, "spectrum", j, spectrum_csv(sets));
  return 0;
}

int cmd_winding(const Global& g, const std::string& ref, std::size_t k_count) {
  const State st = steady_state(g);
  const cplx l0 = parse_complex(ref);
  const BandSet b = pbc_bands(st.spec, photon_number_of(st), k_count);
  const int w = spectral_winding(b, l0);
  const json j = {{"reference", {l0.real(), l0.imag()}}, {"winding", w}, {"photon_number", photon_number_of(st)}};
  emit(g, "winding", j, table_csv({"re", "im", "winding"}, {{l0.real(), l0.imag(), static_cast<double>(w)}}));
  return 0;
}

int cmd_braid(const Global& g, std::size_t k_count) {
  const State st = steady_state(g);
  const double n = photon_number_of(st);
  const BandSet b = pbc_bands(st.spec, n, k_count);
  const int nu = braid_degree(b);
  const json j = {{"braid_degree", nu}, {"photon_number", n}, {"min_band_separation", b.min_band_separation}};
  emit(g, "braid", j, table_csv({"n", "braid"}, {{n, static_cast<double>(nu)}}));
  return 0;
}

json matrix_json(const CMat& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(complex_json(m.row(i).transpose()));
  return out;
}

json matrix_json(const RMat& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

int cmd_correlations(const Global& g, const std::string& method) {
  const State st = steady_state(g);
  RMat cov;
  if (method == "kspace") {
    cov = covariance_map_from_k(st.spec, photon_number_of(st));
  } else {
    cov = covariance_map(solve_lyapunov(make_noise_system(st.spec, st.steady)), st.steady);
  }
  emit(g, "covariance", {{"method", method}, {"covariance", matrix_json(cov)}}, covariance_csv(cov));
  return 0;
}

int cmd_montecarlo(const Global& g, const MonteCarloOptions& base, bool nonlinear) {
  const State st = steady_state(g);
  MonteCarloOptions o = base;
  o.threads = g.threads;
  if (g.seed) o.seed = *g.seed;
  const NoiseSystem sys = make_noise_system(st.spec, st.steady);
  const EnsembleResult r = nonlinear ? simulate_nonlinear(st.spec, st.steady, o) : simulate_linear(sys, o);
  json j = {{"n_trajectories", r.n_trajectories}, {"seed", r.seed},          {"dt", r.dt},
            {"t_relax", r.t_relax},               {"t_collect", r.t_collect}, {"nonlinear", nonlinear},
            {"moments", matrix_json(r.moment_estimate)}, {"standard_errors", matrix_json(r.standard_errors)}};
  if (nonlinear) {
    j["basin_escapes"] = r.basin_escapes;
    j["diverged"] = r.diverged;
  }
  const StabilityReport stab = is_stable(sys);
  if (stab.stable) {
    const MomentMatrix exact = solve_lyapunov(sys);
    double worst = 0.0;
    for (Eigen::Index a = 0; a < exact.m.rows(); ++a)
      for (Eigen::Index b = 0; b < exact.m.cols(); ++b)
        worst = std::max(worst, std::abs(r.moment_estimate(a, b) - exact.m(a, b)) / r.standard_errors(a, b));
    j["lyapunov_comparison"] = {{"max_z", worst}, {"within_3_sigma", within_sigma(r, exact.m, 3.0)}};
  }
  std::vector<std::vector<double>> rows;
  for (Eigen::Index a = 0; a < r.moment_estimate.rows(); ++a)
    for (Eigen::Index b = 0; b < r.moment_estimate.cols(); ++b)
      rows.push_back({static_cast<double>(a), static_cast<double>(b), r.moment_estimate(a, b).real(),
                      r.moment_estimate(a, b).imag(), r.standard_errors(a, b)});
  emit(g, "montecarlo", j, table_csv({"i", "j", "re", "im", "se"}, rows));
  return 0;
}

int cmd_scenario(const Global& g, const std::string& name) {
  ScenarioDoc doc = load_scenario(name);
  if (g.seed) doc.model["rng_seed"] = *g.seed;
  if (doc.scenario == "oracle_crosscheck") {
    doc.parameters["threads"] = g.threads;
    if (g.seed) doc.parameters["seed"] = *g.seed;
  }
  const std::string dir = g.out + "/" + doc.scenario;
  const ScenarioReport r = run_scenario(doc, dir);
  for (const auto& c : r.checks)
    std::printf("%s %-40s value=%s (%s)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), fmt17(c.value).c_str(),
                c.threshold.c_str());
  std::printf("summary: %s/summary.json\n", dir.c_str());
  return r.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise of driven-dissipative non-reciprocal Kerr lattices"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "Model or scenario JSON file");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Override rng_seed and the Monte-Carlo seed");
  app.add_option("--threads", g.threads, "Worker threads for Monte-Carlo")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  app.add_option("--photon-number", g.photon_number,
                 "Use the uniform periodic state with this photon number instead of time marching");
  app.add_option("--photon-scale", g.photon_scale, "Multiply photon numbers: beta / f, drives * sqrt(f)")
      ->check(CLI::PositiveNumber);

  auto* steady = app.add_subcommand("steady", "Mean-field steady state");
  auto* sweep = app.add_subcommand("sweep", "Flux sweep of a uniform periodic chain");
  double flux_min = 1e-3, flux_max = 20.0;
  std::size_t flux_count = 2000, k_count = 1024;
  sweep->add_option("--flux-min", flux_min)->capture_default_str();
  sweep->add_option("--flux-max", flux_max)->capture_default_str();
  sweep->add_option("--flux-count", flux_count)->capture_default_str();
  sweep->add_option("--k-count", k_count)->capture_default_str();

  auto* transient = app.add_subcommand("transient", "Mean-field time evolution or perturbation response");
  double t_end = 50.0, epsilon = 0.01;
  std::size_t n_out = 400;
  std::optional<std::size_t> site;
  transient->add_option("--t-end", t_end)->capture_default_str();
  transient->add_option("--n-out", n_out)->capture_default_str();
  transient->add_option("--site", site, "Perturb this site of the steady state");
  transient->add_option("--epsilon", epsilon)->capture_default_str();

  auto* noise = app.add_subcommand("noise", "Per-site intensity and phase noise (Lyapunov)");
  auto* spectrum = app.add_subcommand("spectrum", "Noise-Hamiltonian spectrum");
  spectrum->add_option("--k-count", k_count)->capture_default_str();
  auto* winding = app.add_subcommand("winding", "Point-gap winding number of the periodic bands");
  std::string ref;
  winding->add_option("--ref", ref, "Reference point RE,IM")->required();
  winding->add_option("--k-count", k_count)->capture_default_str();
  auto* braid = app.add_subcommand("braid", "Braid degree of the periodic bands");
  braid->add_option("--k-count", k_count)->capture_default_str();
  auto* corr = app.add_subcommand("correlations", "Intensity covariance map");
  std::string method = "lyapunov";
  corr->add_option("--method", method)->check(CLI::IsMember({"kspace", "lyapunov"}))->capture_default_str();

  auto* mc = app.add_subcommand("montecarlo", "Monte-Carlo ensemble of the Langevin equations");
  MonteCarloOptions mco;
  bool nonlinear = false;
  mc->add_option("--trajectories", mco.n_traj)->capture_default_str();
  mc->add_option("--dt", mco.dt, "0 = 0.02 / spectral radius (0.005 with --nonlinear)");
  mc->add_option("--t-relax", mco.t_relax, "0 = 10 / slowest decay rate");
  mc->add_option("--t-collect", mco.t_collect, "0 = 50 / slowest decay rate");
  mc->add_flag("--nonlinear", nonlinear, "Integrate the full nonlinear equations");

  auto* scen = app.add_subcommand("scenario", "Run a preset scenario or scenario file");
  std::string scenario_name;
  scen->add_option("name", scenario_name, "fig1_transient | fig2_immunity | fig3_nhse | fig4_phase | "
                                          "oracle_crosscheck | path to a JSON file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*steady) return cmd_steady(g);
    if (*sweep) return cmd_sweep(g, flux_min, flux_max, flux_count, k_count);
    if (*transient) return cmd_transient(g, t_end, n_out, site, epsilon);
    if (*noise) return cmd_noise(g);
    if (*spectrum) return cmd_spectrum(g, k_count);
    if (*winding) return cmd_winding(g, ref, k_count);
    if (*braid) return cmd_braid(g, k_count);
    if (*corr) return cmd_correlations(g, method);
    if (*mc) return cmd_montecarlo(g, mco, nonlinear);
    if (*scen) return cmd_scenario(g, scenario_name);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const UnstableError& e) {
    std::cerr << "unstable: " << e.what() << " (max growth rate " << e.max_growth_rate << ")\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
