#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nhnoise/model.hpp"

namespace nhnoise {

using json = nlohmann::json;

/// Model document keys. Per-site arrays accept a scalar (broadcast), an
/// explicit array of length n_sites, or {"random": {"low": a, "high": b, "seed": s}}
/// (seed defaults to rng_seed). `gamma` also accepts "minimum" (= 2|kappa|).
/// `drives` entries are [re, im] pairs; a single pair broadcasts and the
/// random form yields zero-phase magnitudes.
inline const std::set<std::string>& model_keys() {
  static const std::set<std::string> k{"n_sites", "boundary", "g",     "kappa",        "beta",    "delta",
                                       "eta",     "gamma",    "drives", "excess_noise", "rng_seed"};
  return k;
}

namespace detail {

inline std::uint64_t field_seed(const json& obj, std::uint64_t fallback, const std::string& key) {
  if (!obj.contains("seed")) return fallback;
  if (!obj["seed"].is_number_unsigned() && !(obj["seed"].is_number_integer() && obj["seed"].get<long long>() >= 0))
    throw ConfigError("key '" + key + "': random seed must be a non-negative integer");
  return obj["seed"].get<std::uint64_t>();
}

inline double number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("key '" + key + "': expected a number, got " + v.dump());
  return v.get<double>();
}

inline std::vector<double> random_array(const json& v, std::size_t n, std::uint64_t seed, const std::string& key) {
  for (auto it = v.begin(); it != v.end(); ++it)
    if (it.key() != "random") throw ConfigError("key '" + key + "': unknown key '" + it.key() + "' in random spec");
  const json& r = v["random"];
  if (!r.is_object()) throw ConfigError("key '" + key + "': 'random' must be an object");
  for (auto it = r.begin(); it != r.end(); ++it)
    if (it.key() != "low" && it.key() != "high" && it.key() != "seed")
      throw ConfigError("key '" + key + ".random': unknown key '" + it.key() + "'");
  if (!r.contains("low") || !r.contains("high"))
    throw ConfigError("key '" + key + ".random': requires 'low' and 'high'");
  RandomDetuningSpec rs{number(r["low"], key + ".random.low"), number(r["high"], key + ".random.high"),
                        field_seed(r, seed, key)};
  try {
    return sample_detunings(rs, n);
  } catch (const ParameterError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

inline std::vector<double> real_array(const json& v, std::size_t n, std::uint64_t seed, const std::string& key) {
  if (v.is_number()) return std::vector<double>(n, v.get<double>());
  if (v.is_array()) {
    if (v.size() != n)
      throw ConfigError("key '" + key + "': array length " + std::to_string(v.size()) + " differs from n_sites " +
                        std::to_string(n));
    std::vector<double> out;
    for (const auto& x : v) out.push_back(number(x, key));
    return out;
  }
  if (v.is_object() && v.contains("random")) return random_array(v, n, seed, key);
  throw ConfigError("key '" + key + "': expected number, array, or {\"random\": {...}}");
}

inline cplx complex_pair(const json& v, const std::string& key) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2) return {number(v[0], key), number(v[1], key)};
  throw ConfigError("key '" + key + "': complex values are [re, im] pairs");
}

inline std::vector<cplx> complex_array(const json& v, std::size_t n, std::uint64_t seed, const std::string& key) {
  if (v.is_number() || (v.is_array() && v.size() == 2 && v[0].is_number() && n != 2))
    return std::vector<cplx>(n, complex_pair(v, key));
  if (v.is_array()) {
    if (v.size() != n)
      throw ConfigError("key '" + key + "': array length " + std::to_string(v.size()) + " differs from n_sites " +
                        std::to_string(n));
    std::vector<cplx> out;
    for (const auto& x : v) out.push_back(complex_pair(x, key));
    return out;
  }
  if (v.is_object() && v.contains("random")) {
    const auto mag = random_array(v, n, seed, key);
    return std::vector<cplx>(mag.begin(), mag.end());
  }
  throw ConfigError("key '" + key + "': expected [re, im], array of pairs, or {\"random\": {...}}");
}

}  // namespace detail

/// Builds a LatticeSpec from a model document. Unknown or missing keys are
/// hard errors; physical validity is checked separately by validate().
inline LatticeSpec spec_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("model config must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!model_keys().count(it.key())) throw ConfigError("unknown key '" + it.key() + "'");
  for (const char* req : {"n_sites", "boundary", "g", "kappa", "beta", "delta", "eta", "drives"})
    if (!doc.contains(req)) throw ConfigError(std::string("missing required key '") + req + "'");

  LatticeSpec s;
  const json& ns = doc["n_sites"];
  if (!ns.is_number_integer() || ns.get<long long>() < 1) throw ConfigError("key 'n_sites': expected integer >= 1");
  s.n_sites = ns.get<std::size_t>();
  const std::string b = doc["boundary"].is_string() ? doc["boundary"].get<std::string>() : "";
  if (b == "open") s.boundary = Boundary::open;
  else if (b == "periodic") s.boundary = Boundary::periodic;
  else throw ConfigError("key 'boundary': expected \"open\" or \"periodic\"");
  if (doc.contains("rng_seed")) {
    const json& r = doc["rng_seed"];
    if (!r.is_number_integer() || r.get<long long>() < 0) throw ConfigError("key 'rng_seed': expected integer >= 0");
    s.rng_seed = r.get<std::uint64_t>();
  }
  s.g = detail::number(doc["g"], "g");
  s.kappa = detail::number(doc["kappa"], "kappa");
  const std::size_t n = s.n_sites;
  // Distinct default streams per field so random fields are not identical.
  s.beta = detail::real_array(doc["beta"], n, s.rng_seed + 1, "beta");
  s.delta = detail::real_array(doc["delta"], n, s.rng_seed + 2, "delta");
  s.eta = detail::real_array(doc["eta"], n, s.rng_seed + 3, "eta");
  if (!doc.contains("gamma") || (doc["gamma"].is_string() && doc["gamma"].get<std::string>() == "minimum")) {
    s.gamma.assign(n, minimum_gamma(s.kappa));
  } else if (doc["gamma"].is_string()) {
    throw ConfigError("key 'gamma': the only string value is \"minimum\"");
  } else {
    s.gamma = detail::real_array(doc["gamma"], n, s.rng_seed + 4, "gamma");
  }
  s.drives = detail::complex_array(doc["drives"], n, s.rng_seed + 5, "drives");
  if (doc.contains("excess_noise")) {
    const json& xs = doc["excess_noise"];
    if (!xs.is_array()) throw ConfigError("key 'excess_noise': expected a list of {site, db}");
    for (const auto& x : xs) {
      if (!x.is_object()) throw ConfigError("key 'excess_noise': entries are {\"site\": i, \"db\": X}");
      for (auto it = x.begin(); it != x.end(); ++it)
        if (it.key() != "site" && it.key() != "db")
          throw ConfigError("key 'excess_noise': unknown key '" + it.key() + "'");
      if (!x.contains("site") || !x.contains("db")) throw ConfigError("key 'excess_noise': entries need site and db");
      if (!x["site"].is_number_integer() || x["site"].get<long long>() < 0)
        throw ConfigError("key 'excess_noise.site': expected integer >= 0");
      s.excess_noise.push_back({x["site"].get<std::size_t>(), detail::number(x["db"], "excess_noise.db")});
    }
  }
  return s;
}

/// Parses JSON text; an empty document is treated as {} so the first missing
/// required key is named.
inline json parse_json_text(const std::string& text, const std::string& origin) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number for the message.
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
    throw ConfigError(origin + ": JSON parse error at line " + std::to_string(line) + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

inline LatticeSpec load_spec(const std::string& path) {
  try {
    return spec_from_json(read_json_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Model document for a spec (explicit arrays, gamma as numbers).
inline json spec_to_json(const LatticeSpec& s) {
  json d;
  d["n_sites"] = s.n_sites;
  d["boundary"] = to_string(s.boundary);
  d["g"] = s.g;
  d["kappa"] = s.kappa;
  d["beta"] = s.beta;
  d["delta"] = s.delta;
  d["eta"] = s.eta;
  d["gamma"] = s.gamma;
  json drives = json::array();
  for (cplx z : s.drives) drives.push_back({z.real(), z.imag()});
  d["drives"] = drives;
  json xs = json::array();
  for (const auto& x : s.excess_noise) xs.push_back({{"site", x.site}, {"db", x.db}});
  d["excess_noise"] = xs;
  d["rng_seed"] = s.rng_seed;
  return d;
}

}  // namespace nhnoise
