#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nhnoise/config.hpp"
#include "nhnoise/meanfield.hpp"

namespace nhnoise {

/// Shortest text that round-trips a double exactly (17 significant digits).
inline std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes `content` to a temporary sibling and renames it over `path`.
inline void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error("cannot rename '" + tmp.string() + "' to '" + path + "': " + ec.message());
}

inline std::string json_text(const json& j) { return j.dump(2) + "\n"; }

inline void write_json(const std::string& path, const json& j) { write_atomic(path, json_text(j)); }

/// Complex values as [re, im] pairs.
inline json complex_json(const CVec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back({v[i].real(), v[i].imag()});
  return a;
}

inline json steady_state_json(const SteadyState& s) {
  json j;
  j["alpha"] = complex_json(s.alpha);
  j["n"] = std::vector<double>(s.photon_numbers.data(), s.photon_numbers.data() + s.photon_numbers.size());
  j["residual"] = s.residual_norm;
  j["converged"] = s.converged;
  if (!s.diagnostic.empty()) j["diagnostic"] = s.diagnostic;
  return j;
}

/// Reads {alpha: [[re, im], ...]} written by steady_state_json.
inline SteadyState steady_state_from_json(const json& j) {
  if (!j.is_object() || !j.contains("alpha") || !j["alpha"].is_array())
    throw ConfigError("steady-state file: missing 'alpha' array");
  CVec a(static_cast<Eigen::Index>(j["alpha"].size()));
  for (std::size_t i = 0; i < j["alpha"].size(); ++i) {
    const json& p = j["alpha"][i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ConfigError("steady-state file: alpha entries are [re, im] pairs");
    a[static_cast<Eigen::Index>(i)] = cplx(p[0].get<double>(), p[1].get<double>());
  }
  const double res = j.value("residual", 0.0);
  return make_steady_state(a, res, j.value("converged", true));
}

/// "i,j,cov" rows for every entry of a real matrix.
inline std::string covariance_csv(const RMat& c) {
  std::string out = "i,j,cov\n";
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      out += std::to_string(i) + "," + std::to_string(j) + "," + fmt17(c(i, j)) + "\n";
  return out;
}

struct LabeledEigenvalues {
  CVec values;
  std::string boundary;
};

/// "re,im,boundary" rows.
inline std::string spectrum_csv(const std::vector<LabeledEigenvalues>& sets) {
  std::string out = "re,im,boundary\n";
  for (const auto& s : sets)
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
      out += fmt17(s.values[i].real()) + "," + fmt17(s.values[i].imag()) + "," + s.boundary + "\n";
  return out;
}

/// Trajectory CSV: time, then re_i, im_i for every site.
inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out = "t";
  const auto n = tr.states.empty() ? 0 : tr.states.front().size();
  for (Eigen::Index i = 0; i < n; ++i) out += ",re_" + std::to_string(i) + ",im_" + std::to_string(i);
  out += "\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    out += fmt17(tr.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) out += "," + fmt17(tr.states[k][i].real()) + "," + fmt17(tr.states[k][i].imag());
    out += "\n";
  }
  return out;
}

/// Generic numeric table with a header row.
inline std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + fmt17(r[c]);
    out += "\n";
  }
  return out;
}

}  // namespace nhnoise
