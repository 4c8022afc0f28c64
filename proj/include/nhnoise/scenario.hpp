#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nhnoise/config.hpp"
#include "nhnoise/io.hpp"
#include "nhnoise/kspace.hpp"
#include "nhnoise/stochastic.hpp"
#include "nhnoise/sweep.hpp"

namespace nhnoise {

/// One pass/fail line of a scenario summary.
struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string threshold;
  std::string detail;
};

struct ScenarioReport {
  std::string name;
  std::vector<Check> checks;
  std::vector<std::string> artifacts;
  json results = json::object();

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  const Check& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw Error("scenario '" + this->name + "': no check named '" + name + "'");
  }
};

/// A scenario document: {"scenario": name, "model": {...}, "parameters": {...}}.
struct ScenarioDoc {
  std::string scenario;
  json model;
  json parameters = json::object();
  std::string origin;
};

inline std::string preset_dir() {
#ifdef NHNOISE_PRESET_DIR
  return NHNOISE_PRESET_DIR;
#else
  return "presets";
#endif
}

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> n{"fig1_transient", "fig2_immunity", "fig3_nhse", "fig4_phase",
                                          "oracle_crosscheck"};
  return n;
}

inline ScenarioDoc scenario_from_json(const json& doc, const std::string& origin) {
  if (!doc.is_object()) throw ConfigError(origin + ": scenario document must be a JSON object");
  ScenarioDoc d;
  d.origin = origin;
  if (!doc.contains("scenario")) {
    // A bare model document runs the generic pipeline.
    d.scenario = "custom";
    d.model = doc;
    return d;
  }
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (it.key() != "scenario" && it.key() != "model" && it.key() != "parameters" && it.key() != "description")
      throw ConfigError(origin + ": unknown key '" + it.key() + "'");
  if (!doc["scenario"].is_string()) throw ConfigError(origin + ": key 'scenario' must be a string");
  d.scenario = doc["scenario"].get<std::string>();
  if (!doc.contains("model")) throw ConfigError(origin + ": missing required key 'model'");
  d.model = doc["model"];
  if (doc.contains("parameters")) d.parameters = doc["parameters"];
  if (!d.parameters.is_object()) throw ConfigError(origin + ": key 'parameters' must be an object");
  return d;
}

/// Resolves a preset name to presets/<name>.json; anything else is a path.
inline ScenarioDoc load_scenario(const std::string& name_or_path, const std::string& dir = preset_dir()) {
  const bool named = std::find(scenario_names().begin(), scenario_names().end(), name_or_path) != scenario_names().end();
  const std::string path = named ? dir + "/" + name_or_path + ".json" : name_or_path;
  if (!named && !std::filesystem::exists(path))
    throw ConfigError("unknown scenario '" + name_or_path + "' (not a preset name or an existing file)");
  return scenario_from_json(read_json_file(path), path);
}

namespace detail {

/// Typed access to scenario parameters with key-qualified errors.
class Params {
 public:
  Params(const json& j, std::string scenario, std::set<std::string> allowed)
      : j_(j), scenario_(std::move(scenario)) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!allowed.count(it.key())) throw ConfigError(scenario_ + ": unknown parameter '" + it.key() + "'");
  }
  const json& raw(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(scenario_ + ": missing parameter '" + key + "'");
    return j_.at(key);
  }
  double num(const std::string& key) const {
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(scenario_ + ": parameter '" + key + "' must be a number");
    return v.get<double>();
  }
  std::size_t index(const std::string& key) const {
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw ConfigError(scenario_ + ": parameter '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
  }
  std::vector<double> nums(const std::string& key) const {
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(scenario_ + ": parameter '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(scenario_ + ": parameter '" + key + "' must hold numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string scenario_;
};

inline LatticeSpec model_spec(const json& model, const std::string& what) {
  try {
    LatticeSpec s = spec_from_json(model);
    require_valid(s, what.c_str());
    return s;
  } catch (const ConfigError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

/// Writes artifacts under the output directory and records their paths.
class Artifacts {
 public:
  Artifacts(std::string dir, ScenarioReport& r) : dir_(std::move(dir)), r_(r) {}
  void write(const std::string& name, const std::string& content) {
    const std::string path = dir_ + "/" + name;
    write_atomic(path, content);
    r_.artifacts.push_back(name);
  }
  void write_json(const std::string& name, const json& j) { write(name, json_text(j)); }

 private:
  std::string dir_;
  ScenarioReport& r_;
};

/// Thresholds are labels for humans: six significant digits.
inline std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string fmt_threshold(const char* op, double v) { return std::string(op) + " " + fmt_short(v); }

inline void add(ScenarioReport& r, std::string name, bool ok, double value, std::string threshold,
                std::string detail = "") {
  r.checks.push_back({std::move(name), ok, value, std::move(threshold), std::move(detail)});
}

inline SteadyState require_steady(const LatticeSpec& s, const std::string& what) {
  SteadyState ss = find_steady_state(s);
  if (!ss.converged) throw NumericalError(what + ": steady state did not converge (" + ss.diagnostic + ")");
  return ss;
}

inline MomentMatrix moments_of(const LatticeSpec& s, const SteadyState& ss) {
  return solve_lyapunov(make_noise_system(s, ss));
}

/// Number of steps i -> i+1 along which a profile increases (a profile that
/// grows toward the left boundary has none).
inline std::size_t rightward_increases(const std::vector<double>& p, double tol) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    if (p[i + 1] > p[i] + tol) ++c;
  return c;
}

inline double spread(const std::vector<double>& p) {
  return *std::max_element(p.begin(), p.end()) - *std::min_element(p.begin(), p.end());
}

inline json site_noise_json(const std::vector<SiteNoise>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back({{"n", x.photon_number}, {"intensity_db", x.intensity_db}, {"phase_db", x.phase_db}});
  return a;
}

inline std::string site_noise_csv(const std::vector<SiteNoise>& v) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < v.size(); ++i)
    rows.push_back({static_cast<double>(i), v[i].photon_number, v[i].intensity_db, v[i].phase_db});
  return table_csv({"site", "n", "intensity_db", "phase_db"}, rows);
}

inline double relative_frobenius(const RMat& a, const RMat& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Circular site distance on a ring of n sites.
inline std::size_t ring_distance(std::size_t i, std::size_t j, std::size_t n) {
  const std::size_t d = i > j ? i - j : j - i;
  return std::min(d, n - d);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scenario pipelines

inline ScenarioReport run_fig1_transient(const ScenarioDoc& doc, const std::string& out_dir) {
  ScenarioReport r;
  r.name = "fig1_transient";
  detail::Artifacts art(out_dir, r);
  const detail::Params p(doc.parameters, r.name,
                         {"site", "epsilon", "t_end", "n_out", "chirality_min", "uniformity_max", "control_model",
                          "control_ratio_min", "control_ratio_max"});
  const LatticeSpec s = detail::model_spec(doc.model, r.name + ".model");
  const std::size_t site = p.index("site");
  const SteadyState ss = detail::require_steady(s, r.name);
  art.write_json("steady_state.json", steady_state_json(ss));

  const RVec n = ss.photon_numbers;
  const double ratio_n = n.maxCoeff() / n.minCoeff();
  detail::add(r, "near_uniform_photon_numbers", ratio_n < p.num("uniformity_max"), ratio_n,
              detail::fmt_threshold("max/min n <", p.num("uniformity_max")));

  const auto n_out = p.index("n_out");
  const ResponseMap resp = perturbation_response(s, ss, site, p.num("epsilon"), p.num("t_end"), n_out);
  const double chir = chirality_ratio(resp, site);
  detail::add(r, "chirality_ratio", chir > p.num("chirality_min"), chir,
              detail::fmt_threshold("left/right >", p.num("chirality_min")));
  {
    std::vector<std::string> header{"t"};
    for (std::size_t i = 0; i < s.n_sites; ++i) header.push_back("dn_" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < resp.times.size(); ++k) {
      std::vector<double> row{resp.times[k]};
      for (Eigen::Index i = 0; i < resp.values.cols(); ++i) row.push_back(resp.values(static_cast<Eigen::Index>(k), i));
      rows.push_back(std::move(row));
    }
    art.write("response.csv", table_csv(header, rows));
  }

  const LatticeSpec c = detail::model_spec(p.raw("control_model"), r.name + ".control_model");
  const SteadyState css = detail::require_steady(c, r.name + " control");
  const ResponseMap cresp = perturbation_response(c, css, site, p.num("epsilon"), p.num("t_end"), n_out);
  const double cchir = chirality_ratio(cresp, site);
  const double lo = p.num("control_ratio_min"), hi = p.num("control_ratio_max");
  detail::add(r, "reciprocal_control_ratio", cchir >= lo && cchir <= hi, cchir,
              "in [" + detail::fmt_short(lo) + ", " + detail::fmt_short(hi) + "]");

  r.results = {{"photon_number_ratio", ratio_n}, {"chirality_ratio", chir}, {"control_chirality_ratio", cchir},
               {"steady_state", steady_state_json(ss)}};
  return r;
}

inline ScenarioReport run_fig2_immunity(const ScenarioDoc& doc, const std::string& out_dir) {
  ScenarioReport r;
  r.name = "fig2_immunity";
  detail::Artifacts art(out_dir, r);
  const detail::Params p(doc.parameters, r.name,
                         {"site", "kappa_values", "injection_db", "sweep_db", "baseline_min_db", "baseline_max_db",
                          "min_rise_db", "protection_tol_db", "flatness_db"});
  const std::size_t site = p.index("site");
  const double inj = p.num("injection_db");
  const auto sweep_db = p.nums("sweep_db");
  const auto kappas = p.nums("kappa_values");
  if (kappas.size() != 2 || kappas[0] != 0.0)
    throw ConfigError(r.name + ": kappa_values must be [0, kappa_nonreciprocal]");

  std::vector<std::vector<double>> table, sweep_rows;
  json per_kappa = json::array();
  std::vector<double> base_all;
  double min_rise_reciprocal = 0.0, right_shift = 0.0, right_injected = 0.0, right_variation = 0.0;
  for (std::size_t kk = 0; kk < kappas.size(); ++kk) {
    json model = doc.model;
    model["kappa"] = kappas[kk];
    const LatticeSpec s0 = detail::model_spec(model, r.name + ".model");
    if (site >= s0.n_sites) throw ConfigError(r.name + ": site out of range");
    const SteadyState ss = detail::require_steady(s0, r.name);
    const auto base = site_noise(detail::moments_of(s0, ss), ss);
    LatticeSpec s1 = s0;
    s1.excess_noise = {{site, inj}};
    const auto noisy = site_noise(detail::moments_of(s1, ss), ss);
    double min_rise = 1e300;
    for (std::size_t i = 0; i < s0.n_sites; ++i) {
      table.push_back({kappas[kk], static_cast<double>(i), base[i].photon_number, base[i].intensity_db,
                       noisy[i].intensity_db, base[i].phase_db, noisy[i].phase_db});
      min_rise = std::min(min_rise, noisy[i].intensity_db - base[i].intensity_db);
      base_all.push_back(base[i].intensity_db);
    }
    const std::size_t right = s0.n_sites - 1;
    std::vector<double> right_curve;
    for (double db : sweep_db) {
      LatticeSpec sx = s0;
      sx.excess_noise = {{site, db}};
      const MomentMatrix m = detail::moments_of(sx, ss);
      const double left_db = intensity_noise_db(m, ss, 0), right_db = intensity_noise_db(m, ss, right);
      sweep_rows.push_back({kappas[kk], db, left_db, right_db});
      right_curve.push_back(right_db);
    }
    if (kk == 0) {
      min_rise_reciprocal = min_rise;
    } else {
      right_shift = noisy[right].intensity_db - base[right].intensity_db;
      right_injected = noisy[right].intensity_db;
      right_variation = detail::spread(right_curve);
    }
    per_kappa.push_back({{"kappa", kappas[kk]},
                         {"min_rise_db", min_rise},
                         {"right_site_variation_db", detail::spread(right_curve)},
                         {"baseline", detail::site_noise_json(base)},
                         {"injected", detail::site_noise_json(noisy)}});
  }
  art.write("noise_table.csv", table_csv({"kappa", "site", "n", "baseline_intensity_db", "injected_intensity_db",
                                          "baseline_phase_db", "injected_phase_db"},
                                         table));
  art.write("injection_sweep.csv", table_csv({"kappa", "injection_db", "left_intensity_db", "right_intensity_db"},
                                             sweep_rows));

  const double bmin = *std::min_element(base_all.begin(), base_all.end());
  const double bmax = *std::max_element(base_all.begin(), base_all.end());
  const double wlo = p.num("baseline_min_db"), whi = p.num("baseline_max_db");
  detail::add(r, "baseline_squeezing_window", bmin >= wlo && bmax <= whi, bmax,
              "all sites in [" + detail::fmt_short(wlo) + ", " + detail::fmt_short(whi) + "] dB",
              "baseline range [" + detail::fmt_short(bmin) + ", " + detail::fmt_short(bmax) + "] dB");
  detail::add(r, "reciprocal_min_rise", min_rise_reciprocal >= p.num("min_rise_db"), min_rise_reciprocal,
              detail::fmt_threshold("dB >=", p.num("min_rise_db")));
  detail::add(r, "protected_right_site_shift", std::abs(right_shift) <= p.num("protection_tol_db"), right_shift,
              detail::fmt_threshold("|dB| <=", p.num("protection_tol_db")));
  detail::add(r, "protected_right_site_squeezed", right_injected < 0.0, right_injected, "dB < 0");
  detail::add(r, "protected_right_site_flatness", right_variation < p.num("flatness_db"), right_variation,
              detail::fmt_threshold("dB <", p.num("flatness_db")), "over the injection sweep");
  r.results = {{"per_kappa", per_kappa}};
  return r;
}

inline ScenarioReport run_fig3_nhse(const ScenarioDoc& doc, const std::string& out_dir) {
  ScenarioReport r;
  r.name = "fig3_nhse";
  detail::Artifacts art(out_dir, r);
  const detail::Params p(doc.parameters, r.name,
                         {"k_count", "localization_fraction", "max_nonmonotone_steps", "pbc_uniformity_db"});
  json model = doc.model;
  model["boundary"] = "periodic";
  const LatticeSpec pbc = detail::model_spec(model, r.name + ".model");
  model["boundary"] = "open";
  const LatticeSpec obc = detail::model_spec(model, r.name + ".model");
  const std::size_t n_sites = pbc.n_sites;

  const SteadyState ps = detail::require_steady(pbc, r.name + " periodic");
  const SteadyState os = detail::require_steady(obc, r.name + " open");
  const double n = ps.photon_numbers.mean();
  const BandSet bands = pbc_bands(pbc, n, p.index("k_count"));

  // Reference points: the centroid of each band loop.
  int w_min = 1 << 20, w_max = -(1 << 20);
  json windings = json::array();
  for (std::size_t b = 0; b < 2; ++b) {
    const auto curve = bands.band(b);
    cplx centroid = 0.0;
    for (cplx z : curve) centroid += z;
    centroid /= static_cast<double>(curve.size());
    const int w = spectral_winding(bands, centroid);
    w_min = std::min(w_min, w);
    w_max = std::max(w_max, w);
    windings.push_back({{"reference", {centroid.real(), centroid.imag()}}, {"winding", w}});
  }
  detail::add(r, "winding_number", w_min == 1 && w_max == 1, w_min, "w = +1 at both loop centroids");

  const NoiseSystem osys = make_noise_system(obc, os);
  const ObcSpectrum ospec = obc_spectrum(osys.hamiltonian);
  const InclusionReport inc = obc_inside_pbc(bands, ospec.eigenvalues);
  detail::add(r, "obc_inside_pbc", inc.all_inside, static_cast<double>(inc.n_outside), "0 eigenvalues outside");

  const auto loc = localization_metrics(ospec.eigenvectors);
  double com_max = 0.0;
  for (const auto& l : loc) com_max = std::max(com_max, l.center_of_mass);
  const double com_lim = p.num("localization_fraction") * static_cast<double>(n_sites);
  detail::add(r, "obc_modes_left_localized", com_max < com_lim, com_max,
              detail::fmt_threshold("max center of mass <", com_lim));

  const auto pn = site_noise(solve_lyapunov(make_noise_system(pbc, ps)), ps);
  const auto on = site_noise(solve_lyapunov(osys), os);
  std::vector<double> oi, op, pi, pp;
  for (const auto& x : on) {
    oi.push_back(x.intensity_db);
    op.push_back(x.phase_db);
  }
  for (const auto& x : pn) {
    pi.push_back(x.intensity_db);
    pp.push_back(x.phase_db);
  }
  const auto steps_allowed = p.index("max_nonmonotone_steps");
  const auto si = detail::rightward_increases(oi, 0.0), sp = detail::rightward_increases(op, 0.0);
  detail::add(r, "obc_intensity_staircase", si <= steps_allowed, static_cast<double>(si),
              "non-monotone steps <= " + std::to_string(steps_allowed));
  detail::add(r, "obc_phase_staircase", sp <= steps_allowed, static_cast<double>(sp),
              "non-monotone steps <= " + std::to_string(steps_allowed));
  const double uni = std::max(detail::spread(pi), detail::spread(pp));
  detail::add(r, "pbc_noise_uniform", uni <= p.num("pbc_uniformity_db"), uni,
              detail::fmt_threshold("dB spread <=", p.num("pbc_uniformity_db")));

  std::vector<LabeledEigenvalues> spec_sets;
  CVec band_pts(static_cast<Eigen::Index>(2 * bands.bands.size()));
  for (std::size_t j = 0; j < bands.bands.size(); ++j) {
    band_pts[static_cast<Eigen::Index>(2 * j)] = bands.bands[j][0];
    band_pts[static_cast<Eigen::Index>(2 * j + 1)] = bands.bands[j][1];
  }
  spec_sets.push_back({band_pts, "periodic"});
  spec_sets.push_back({ospec.eigenvalues, "open"});
  art.write("spectrum.csv", spectrum_csv(spec_sets));
  art.write("noise_periodic.csv", detail::site_noise_csv(pn));
  art.write("noise_open.csv", detail::site_noise_csv(on));
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 0; c < loc.size(); ++c)
      rows.push_back({ospec.eigenvalues[static_cast<Eigen::Index>(c)].real(),
                      ospec.eigenvalues[static_cast<Eigen::Index>(c)].imag(), loc[c].center_of_mass, loc[c].ipr});
    art.write("obc_localization.csv", table_csv({"re", "im", "center_of_mass", "ipr"}, rows));
  }
  r.results = {{"photon_number", n},
               {"windings", windings},
               {"max_center_of_mass", com_max},
               {"noise_open", detail::site_noise_json(on)},
               {"noise_periodic", detail::site_noise_json(pn)}};
  return r;
}

inline ScenarioReport run_fig4_phase(const ScenarioDoc& doc, const std::string& out_dir) {
  ScenarioReport r;
  r.name = "fig4_phase";
  detail::Artifacts art(out_dir, r);
  const detail::Params p(doc.parameters, r.name,
                         {"flux_min", "flux_max", "flux_count", "k_count", "ep_scan_steps", "photon_numbers",
                          "cubic_tol", "oracle_tol", "positive_range_fraction"});
  const LatticeSpec s = detail::model_spec(doc.model, r.name + ".model");
  const auto k_count = p.index("k_count");
  const auto grid = log_grid(p.num("flux_min"), p.num("flux_max"), p.index("flux_count"));
  const auto sweep = sweep_flux(s, grid, k_count);

  std::vector<std::vector<double>> rows;
  std::size_t three = 0;
  double worst_cubic = 0.0, min_unstable_im = 1e300;
  bool unstable_window = false;
  for (const auto& f : sweep) {
    if (f.roots.size() == 3) {
      ++three;
      unstable_window = true;
      min_unstable_im = std::min(min_unstable_im, f.roots[1].max_im_lambda);
    }
    for (const auto& rt : f.roots) {
      worst_cubic = std::max(worst_cubic, pbc_cubic_residual(s, f.flux, rt.n));
      rows.push_back({f.flux, rt.n, rt.stable ? 1.0 : 0.0, rt.max_im_lambda,
                      rt.braid ? static_cast<double>(*rt.braid) : std::nan("")});
    }
  }
  art.write("sweep.csv", table_csv({"flux", "n", "stable", "max_im_lambda", "braid"}, rows));
  detail::add(r, "cubic_residual", worst_cubic < p.num("cubic_tol"), worst_cubic,
              detail::fmt_threshold("relative residual <", p.num("cubic_tol")));
  detail::add(r, "bistable_window", three > 0, static_cast<double>(three), "fluxes with three roots > 0");
  detail::add(r, "unstable_window_growth", unstable_window && min_unstable_im >= 0.0,
              unstable_window ? min_unstable_im : std::nan(""), "middle-root max Im lambda >= 0");

  const auto seq = stable_braid_sequence(sweep);
  std::string seq_text;
  for (int v : seq) seq_text += (seq_text.empty() ? "" : " -> ") + std::to_string(v);
  detail::add(r, "stable_braid_sequence", seq == std::vector<int>{0, 1, 0}, static_cast<double>(seq.size()),
              "0 -> 1 -> 0", seq_text);

  const auto stable = stable_roots_by_n(sweep);
  json eps = json::array();
  std::size_t transitions = 0, flagged = 0;
  for (std::size_t i = 1; i < stable.size(); ++i) {
    if (!stable[i].braid || !stable[i - 1].braid || *stable[i].braid == *stable[i - 1].braid) continue;
    ++transitions;
    const auto found = exceptional_points_between(s, stable[i - 1].n, stable[i].n, p.index("ep_scan_steps"), k_count);
    const bool ok = !found.empty() && std::all_of(found.begin(), found.end(), [](const ExceptionalPoint& e) {
      return e.confirmed;
    });
    if (ok) ++flagged;
    for (const auto& e : found)
      eps.push_back({{"n", e.n},
                     {"q", e.q},
                     {"relative_separation", e.min_separation},
                     {"confirmed", e.confirmed},
                     {"braid_below", e.braid_below},
                     {"braid_above", e.braid_above}});
  }
  detail::add(r, "exceptional_points_at_transitions", transitions > 0 && flagged == transitions,
              static_cast<double>(flagged), "every braid change flagged (" + std::to_string(transitions) + ")");

  // Correlation presets at fixed photon numbers.
  const json& presets = p.raw("photon_numbers");
  if (!presets.is_object()) throw ConfigError(r.name + ": 'photon_numbers' must be an object");
  for (const char* key : {"low", "near_instability", "high"})
    if (!presets.contains(key) || !presets[key].is_number())
      throw ConfigError(r.name + ": photon_numbers needs numeric '" + std::string(key) + "'");
  json corr = json::object();
  double worst_oracle = 0.0;
  const auto n_sites = s.n_sites;
  for (auto it = presets.begin(); it != presets.end(); ++it) {
    const double n = it.value().get<double>();
    const UniformState us = uniform_state_at(s, n);
    if (!us.steady.converged) throw NumericalError(r.name + ": photon number " + fmt17(n) + " is not a root");
    const RMat lyap = covariance_map(solve_lyapunov(make_noise_system(us.spec, us.steady)), us.steady);
    const RMat kmap = covariance_map_from_k(us.spec, n);
    const double err = detail::relative_frobenius(kmap, lyap);
    worst_oracle = std::max(worst_oracle, err);
    art.write("covariance_" + it.key() + ".csv", covariance_csv(lyap));
    std::vector<std::vector<double>> occ;
    for (std::size_t m = 0; m < n_sites; ++m) {
      const double k = std::remainder(2.0 * kPi * static_cast<double>(m) / static_cast<double>(n_sites), 2.0 * kPi);
      occ.push_back({k, k_resolved_occupation(us.spec, n, k)});
    }
    std::sort(occ.begin(), occ.end());
    art.write("k_occupation_" + it.key() + ".csv", table_csv({"k", "occupation"}, occ));
    corr[it.key()] = {{"photon_number", n},
                      {"flux", flux_for_photon_number(s, n)},
                      {"max_im_lambda", uniform_max_im_lambda(s, n)},
                      {"oracle_relative_error", err}};
    std::vector<double> row0;
    for (Eigen::Index j = 0; j < lyap.cols(); ++j) row0.push_back(lyap(0, j));
    corr[it.key()]["row0"] = row0;
    std::size_t kmax = 0;
    for (std::size_t m = 1; m < occ.size(); ++m)
      if (occ[m][1] > occ[kmax][1]) kmax = m;
    corr[it.key()]["k_max_occupation"] = occ[kmax][0];

    if (it.key() == "near_instability") {
      const auto range = static_cast<std::size_t>(p.num("positive_range_fraction") * static_cast<double>(n_sites));
      double min_cov = 1e300;
      for (std::size_t i = 0; i < n_sites; ++i)
        for (std::size_t j = 0; j < n_sites; ++j)
          if (detail::ring_distance(i, j, n_sites) <= range)
            min_cov = std::min(min_cov, lyap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      detail::add(r, "near_instability_positive_correlations", min_cov > 0.0, min_cov,
                  "cov > 0 for ring distance <= " + std::to_string(range));
    }
    if (it.key() == "high") {
      std::size_t bad = 0;
      const auto half = static_cast<Eigen::Index>(n_sites / 2);
      for (Eigen::Index l = 2; l <= half; l += 2) {
        const double sign = ((l / 2) % 2 == 0) ? 1.0 : -1.0;
        if (!(sign * lyap(0, l) > 0.0)) ++bad;
      }
      for (Eigen::Index l = 1; l < half; l += 2)
        if (!(std::abs(lyap(0, l)) < std::min(std::abs(lyap(0, l - 1)), std::abs(lyap(0, l + 1))))) ++bad;
      detail::add(r, "high_power_checkerboard", bad == 0, static_cast<double>(bad),
                  "0 sign-pattern violations for l <= N/2");
      const double target = -kPi / 2.0;
      detail::add(r, "high_power_k_max", std::abs(occ[kmax][0] - target) < 1e-9, occ[kmax][0],
                  "argmax k = -pi/2");
    }
  }
  detail::add(r, "lyapunov_vs_kspace", worst_oracle < p.num("oracle_tol"), worst_oracle,
              detail::fmt_threshold("relative Frobenius <", p.num("oracle_tol")));
  r.results = {{"three_root_fluxes", three},
               {"stable_braid_sequence", seq},
               {"exceptional_points", eps},
               {"correlations", corr}};
  return r;
}

inline ScenarioReport run_oracle_crosscheck(const ScenarioDoc& doc, const std::string& out_dir) {
  ScenarioReport r;
  r.name = "oracle_crosscheck";
  detail::Artifacts art(out_dir, r);
  const detail::Params p(doc.parameters, r.name,
                         {"dt_factor", "n_traj", "seed", "threads", "sigma", "oracle_tol"});
  const LatticeSpec s = detail::model_spec(doc.model, r.name + ".model");
  const SteadyState ss = detail::require_steady(s, r.name);
  const double n = ss.photon_numbers.mean();
  const NoiseSystem sys = make_noise_system(s, ss);
  const MomentMatrix m = solve_lyapunov(sys);
  const RMat lyap = covariance_map(m, ss);
  const RMat kmap = covariance_map_from_k(s, n);
  const double err = detail::relative_frobenius(kmap, lyap);
  detail::add(r, "lyapunov_vs_kspace", err < p.num("oracle_tol"), err,
              detail::fmt_threshold("relative Frobenius <", p.num("oracle_tol")));

  MonteCarloOptions mc;
  mc.dt = p.num("dt_factor") / detail::rate_scales(sys.drift).radius;
  mc.n_traj = p.index("n_traj");
  mc.seed = p.index("seed");
  mc.threads = static_cast<unsigned>(p.index("threads"));
  const EnsembleResult cov = simulate_linear_covariance(sys, ss, mc);
  const double k = p.num("sigma");
  double worst_lyap = 0.0, worst_k = 0.0;
  for (Eigen::Index i = 0; i < lyap.rows(); ++i)
    for (Eigen::Index j = 0; j < lyap.cols(); ++j) {
      const double se = cov.standard_errors(i, j);
      worst_lyap = std::max(worst_lyap, std::abs(cov.moment_estimate(i, j).real() - lyap(i, j)) / se);
      worst_k = std::max(worst_k, std::abs(cov.moment_estimate(i, j).real() - kmap(i, j)) / se);
    }
  detail::add(r, "montecarlo_vs_lyapunov", worst_lyap <= k, worst_lyap, detail::fmt_threshold("max |z| <=", k));
  detail::add(r, "montecarlo_vs_kspace", worst_k <= k, worst_k, detail::fmt_threshold("max |z| <=", k));

  art.write("covariance_lyapunov.csv", covariance_csv(lyap));
  art.write("covariance_kspace.csv", covariance_csv(kmap));
  art.write("covariance_montecarlo.csv", covariance_csv(cov.moment_estimate.real()));
  art.write("covariance_montecarlo_se.csv", covariance_csv(cov.standard_errors));
  r.results = {{"photon_number", n},
               {"kspace_relative_error", err},
               {"montecarlo",
                {{"n_trajectories", cov.n_trajectories},
                 {"seed", cov.seed},
                 {"dt", cov.dt},
                 {"t_relax", cov.t_relax},
                 {"t_collect", cov.t_collect},
                 {"max_z_lyapunov", worst_lyap},
                 {"max_z_kspace", worst_k}}}};
  return r;
}

/// Generic pipeline for a bare model document: steady state, stability,
/// noise, and for uniform periodic chains the band topology and k-space check.
inline ScenarioReport run_custom(const ScenarioDoc& doc, const std::string& out_dir) {
  ScenarioReport r;
  r.name = "custom";
  detail::Artifacts art(out_dir, r);
  const LatticeSpec s = detail::model_spec(doc.model, doc.origin);
  const SteadyState ss = find_steady_state(s);
  art.write_json("steady_state.json", steady_state_json(ss));
  detail::add(r, "steady_state_converged", ss.converged, ss.residual_norm, "converged", ss.diagnostic);
  if (!ss.converged) return r;
  const NoiseSystem sys = make_noise_system(s, ss);
  const StabilityReport st = is_stable(sys);
  detail::add(r, "linearly_stable", st.stable, st.max_im_lambda, detail::fmt_threshold("max Im lambda <", -kStabilityMargin));
  art.write("spectrum.csv", spectrum_csv({{noise_spectrum(sys), to_string(s.boundary)}}));
  if (!st.stable) return r;
  const MomentMatrix m = solve_lyapunov(sys);
  const auto noise = site_noise(m, ss);
  art.write("noise.csv", detail::site_noise_csv(noise));
  const RMat cov = covariance_map(m, ss);
  art.write("covariance.csv", covariance_csv(cov));
  r.results = {{"steady_state", steady_state_json(ss)}, {"noise", detail::site_noise_json(noise)}};
  if (s.periodic() && is_uniform(s) && s.excess_noise.empty()) {
    const double n = ss.photon_numbers.mean();
    const double err = detail::relative_frobenius(covariance_map_from_k(s, n), cov);
    detail::add(r, "lyapunov_vs_kspace", err < 1e-6, err, "relative Frobenius < 1e-6");
    try {
      r.results["braid_degree"] = braid_degree(pbc_bands(s, n));
    } catch (const NumericalError& e) {
      r.results["braid_degree"] = e.what();
    }
  }
  return r;
}

inline json report_json(const ScenarioReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json j = {{"name", c.name}, {"passed", c.passed}, {"threshold", c.threshold}};
    j["value"] = std::isfinite(c.value) ? json(c.value) : json(nullptr);
    if (!c.detail.empty()) j["detail"] = c.detail;
    checks.push_back(j);
  }
  return {{"scenario", r.name}, {"passed", r.all_passed()}, {"checks", checks}, {"artifacts", r.artifacts},
          {"results", r.results}};
}

/// Runs a scenario document, writes its artifacts and `summary.json` under
/// out_dir, and returns the report.
inline ScenarioReport run_scenario(const ScenarioDoc& doc, const std::string& out_dir) {
  static const std::map<std::string, std::function<ScenarioReport(const ScenarioDoc&, const std::string&)>> table{
      {"fig1_transient", run_fig1_transient}, {"fig2_immunity", run_fig2_immunity},
      {"fig3_nhse", run_fig3_nhse},           {"fig4_phase", run_fig4_phase},
      {"oracle_crosscheck", run_oracle_crosscheck}, {"custom", run_custom}};
  const auto it = table.find(doc.scenario);
  if (it == table.end()) throw ConfigError(doc.origin + ": unknown scenario '" + doc.scenario + "'");
  ScenarioReport r = it->second(doc, out_dir);
  write_json(out_dir + "/summary.json", report_json(r));
  return r;
}

}  // namespace nhnoise
