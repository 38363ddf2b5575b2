// io.hpp
// File interchange: trajectory CSV (canonical schema, micrometer units,
// 17-significant-digit round-trip-safe floats), the references JSON sidecar,
// fit-result JSON, and the INI-style run configuration. In-memory structs
// elsewhere in the library are SI; conversion happens exactly once here.

#pragma once

#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wvlab/alignfit.hpp"
#include "wvlab/beamlab.hpp"
#include "wvlab/core.hpp"

namespace wvlab::io {

class config_error : public error {
 public:
  config_error(const std::string& msg, int line = 0)
      : error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg) {}
};

// %.17g: enough digits that write -> read -> write is byte identical.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, int line, const std::string& what) {
  const char* c = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(c, &end);
  if (end == c || *end != '\0') {
    throw config_error("cannot parse '" + s + "' as a number for " + what, line);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Trajectory CSV. Header and column order are a stable contract.

inline constexpr const char* kTrajectoryHeader = "phi_rad,Rx_um,Ry_um,intensity,sigma_um";

struct TrajectoryRow {
  double phi_rad = 0.0;  // may be NaN in phase-unknown datasets
  double rx_um = 0.0;
  double ry_um = 0.0;
  double intensity = 0.0;
  double sigma_um = 0.0;
};

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  os << kTrajectoryHeader << "\n";
  for (const auto& r : rows) {
    os << g17(r.phi_rad) << ',' << g17(r.rx_um) << ',' << g17(r.ry_um) << ','
       << g17(r.intensity) << ',' << g17(r.sigma_um) << "\n";
  }
}

inline std::vector<TrajectoryRow> read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw config_error("trajectory CSV: empty file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTrajectoryHeader) {
    throw config_error("trajectory CSV: unexpected header '" + line + "'", 1);
  }
  std::vector<TrajectoryRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 5) {
      throw config_error("trajectory CSV: expected 5 columns, got " +
                             std::to_string(f.size()),
                         lineno);
    }
    TrajectoryRow r;
    r.phi_rad = parse_double(f[0], lineno, "phi_rad");
    r.rx_um = parse_double(f[1], lineno, "Rx_um");
    r.ry_um = parse_double(f[2], lineno, "Ry_um");
    r.intensity = parse_double(f[3], lineno, "intensity");
    r.sigma_um = parse_double(f[4], lineno, "sigma_um");
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<TrajectoryRow> rows_from_scan(const beamlab::SimulatedScan& scan,
                                                 bool phase_known) {
  std::vector<TrajectoryRow> rows(scan.samples.size());
  for (std::size_t i = 0; i < scan.samples.size(); ++i) {
    const auto& s = scan.samples[i];
    rows[i].phi_rad = phase_known ? s.phi : std::numeric_limits<double>::quiet_NaN();
    rows[i].rx_um = s.rx * 1e6;
    rows[i].ry_um = s.ry * 1e6;
    rows[i].intensity = s.intensity;
    rows[i].sigma_um = s.sigma_r * 1e6;
  }
  return rows;
}

inline std::vector<beamlab::TrajectorySample> samples_from_rows(
    const std::vector<TrajectoryRow>& rows) {
  std::vector<beamlab::TrajectorySample> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i].phi = rows[i].phi_rad;
    out[i].rx = rows[i].rx_um * 1e-6;
    out[i].ry = rows[i].ry_um * 1e-6;
    out[i].intensity = rows[i].intensity;
    out[i].sigma_r = rows[i].sigma_um * 1e-6;
  }
  return out;
}

// ---------------------------------------------------------------------------
// References sidecar JSON: what the measurement protocol provides besides
// the trajectory (single-arm centroids, tan alpha, eta, geometry), plus the
// generator block of the synthetic run.

inline nlohmann::json refs_json(const beamlab::SimulatedScan& scan, bool phase_known) {
  nlohmann::json j;
  j["tan_alpha"] = scan.pre.tan_alpha();
  j["eta"] = scan.eta;
  j["geometry"] = {{"lambda_nm", scan.geometry.wavelength * 1e9},
                   {"w0_um", scan.geometry.waist * 1e6},
                   {"z_m", scan.geometry.detector_z},
                   {"zr_m", scan.geometry.rayleigh()}};
  j["arm_a_centroid_um"] = {scan.arm_a.x * 1e6, scan.arm_a.y * 1e6};
  j["arm_b_centroid_um"] = {scan.arm_b.x * 1e6, scan.arm_b.y * 1e6};
  j["phase_known"] = phase_known;
  j["generator"] = {{"delta_x_um", scan.truth.delta_x * 1e6},
                    {"delta_y_um", scan.truth.delta_y * 1e6},
                    {"delta_theta_x_urad", scan.truth.delta_theta_x * 1e6},
                    {"delta_theta_y_urad", scan.truth.delta_theta_y * 1e6},
                    {"noise_sigma_um", scan.noise_sigma * 1e6},
                    {"seed", scan.seed}};
  return j;
}

struct Refs {
  double tan_alpha = 1.0;
  double eta = 1.0;
  beamlab::BeamGeometry geometry;
  beamlab::Vec2 arm_a{0.0, 0.0};
  beamlab::Vec2 arm_b{0.0, 0.0};
  bool phase_known = true;
  bool has_generator = false;
  beamlab::MisalignmentParams generator_truth;
};

inline Refs parse_refs(const nlohmann::json& j) {
  Refs r;
  try {
    r.tan_alpha = j.at("tan_alpha").get<double>();
    r.eta = j.at("eta").get<double>();
    const auto& g = j.at("geometry");
    r.geometry = beamlab::BeamGeometry(g.at("lambda_nm").get<double>() * 1e-9,
                                       g.at("w0_um").get<double>() * 1e-6,
                                       g.at("z_m").get<double>());
    r.arm_a = {j.at("arm_a_centroid_um")[0].get<double>() * 1e-6,
               j.at("arm_a_centroid_um")[1].get<double>() * 1e-6};
    r.arm_b = {j.at("arm_b_centroid_um")[0].get<double>() * 1e-6,
               j.at("arm_b_centroid_um")[1].get<double>() * 1e-6};
    if (j.contains("phase_known")) r.phase_known = j.at("phase_known").get<bool>();
    if (j.contains("generator")) {
      const auto& t = j.at("generator");
      r.has_generator = true;
      r.generator_truth = beamlab::MisalignmentParams(
          t.at("delta_x_um").get<double>() * 1e-6, t.at("delta_y_um").get<double>() * 1e-6,
          t.at("delta_theta_x_urad").get<double>() * 1e-6,
          t.at("delta_theta_y_urad").get<double>() * 1e-6);
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("refs JSON: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Fit result JSON.

inline nlohmann::json fit_result_json(const alignfit::FitResult& r) {
  nlohmann::json j;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual_rms_um"] = r.residual_rms * 1e6;
  switch (r.mode) {
    case alignfit::FitMode::phase_known_linear:
      j["mode"] = "linear";
      break;
    case alignfit::FitMode::phase_unknown_nonlinear:
      j["mode"] = "nonlinear";
      j["phi0_rad"] = r.phi0;
      j["phi_scale_rad"] = r.phi_scale;
      break;
    case alignfit::FitMode::reverse_beam:
      j["mode"] = "reverse";
      break;
  }
  if (r.mode == alignfit::FitMode::reverse_beam) {
    j["beam_params_m"] = {r.rayleigh, r.detector_z};
    j["sigma_m"] = {r.sigma[0], r.sigma[1]};
    std::vector<double> cov;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) cov.push_back(r.covariance(a, b));
    }
    j["covariance"] = cov;
  } else {
    // micrometers / microradians; both scale by 1e6 from SI.
    j["params_um_urad"] = {r.params.delta_x * 1e6, r.params.delta_y * 1e6,
                           r.params.delta_theta_x * 1e6, r.params.delta_theta_y * 1e6};
    std::vector<double> sig;
    for (double s : r.sigma) sig.push_back(s * 1e6);
    j["sigma"] = sig;
    std::vector<double> cov;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) cov.push_back(r.covariance(a, b) * 1e12);
    }
    j["covariance"] = cov;
  }
  return j;
}

inline nlohmann::json error_json(int code, const std::string& kind, const std::string& msg) {
  return nlohmann::json{{"error", {{"code", code}, {"kind", kind}, {"message", msg}}}};
}

// ---------------------------------------------------------------------------
// Run configuration (INI-style sections, unit-suffixed keys).

struct RunConfig {
  beamlab::BeamGeometry geometry;
  double tan_alpha = 1.0;
  double eta = 1.0;
  beamlab::MisalignmentParams misalignment;
  double phi_start = 0.0;
  double phi_end = kTwoPi;
  int steps = 64;
  bool phase_known = true;
  double noise_sigma = 0.0;  // m
  std::uint64_t seed = 12345;
  std::string out_traj;
  std::string out_refs;
};

inline RunConfig parse_run_config(std::istream& is) {
  struct Entry {
    std::string value;
    int line;
    bool used = false;
  };
  std::map<std::string, Entry> kv;  // "section.key" -> value
  static const std::set<std::string> kSections = {"geometry", "preselection", "couplings",
                                                  "scan", "noise", "output"};
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.erase(cut);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw config_error("unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section)) {
        throw config_error("unknown section [" + section + "]", lineno);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("expected 'key = value'", lineno);
    if (section.empty()) throw config_error("key outside of any section", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw config_error("empty key or value", lineno);
    const std::string full = section + "." + key;
    if (kv.count(full)) throw config_error("duplicate key '" + full + "'", lineno);
    kv[full] = Entry{value, lineno};
  }

  auto take = [&](const std::string& full) -> Entry* {
    auto it = kv.find(full);
    if (it == kv.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  };
  auto need_num = [&](const std::string& full) {
    Entry* e = take(full);
    if (!e) throw config_error("missing required key '" + full + "'");
    return parse_double(e->value, e->line, full);
  };
  auto opt_num = [&](const std::string& full, double dflt) {
    Entry* e = take(full);
    return e ? parse_double(e->value, e->line, full) : dflt;
  };
  auto opt_bool = [&](const std::string& full, bool dflt) {
    Entry* e = take(full);
    if (!e) return dflt;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    throw config_error("expected true/false for '" + full + "'", e->line);
  };
  auto opt_str = [&](const std::string& full) {
    Entry* e = take(full);
    return e ? e->value : std::string();
  };

  RunConfig cfg;
  cfg.geometry = beamlab::BeamGeometry(need_num("geometry.lambda_nm") * 1e-9,
                                       need_num("geometry.w0_um") * 1e-6,
                                       need_num("geometry.z_m"));
  cfg.tan_alpha = need_num("preselection.tan_alpha");
  {
    Entry* eta = take("preselection.eta");
    Entry* vis = take("preselection.visibility");
    if ((eta != nullptr) == (vis != nullptr)) {
      throw config_error("preselection needs exactly one of 'eta' or 'visibility'");
    }
    if (eta) {
      cfg.eta = parse_double(eta->value, eta->line, "preselection.eta");
    } else {
      const double v = parse_double(vis->value, vis->line, "preselection.visibility");
      cfg.eta = weakvalue::eta_from_visibility(
          v, weakvalue::PreSelection::from_tan_alpha(cfg.tan_alpha, 0.0));
    }
    if (!(cfg.eta > 0.0) || cfg.eta > 1.0) {
      throw config_error("derived eta = " + std::to_string(cfg.eta) + " is outside (0, 1]");
    }
  }
  cfg.misalignment = beamlab::MisalignmentParams(
      opt_num("couplings.delta_x_um", 0.0) * 1e-6, opt_num("couplings.delta_y_um", 0.0) * 1e-6,
      opt_num("couplings.delta_theta_x_urad", 0.0) * 1e-6,
      opt_num("couplings.delta_theta_y_urad", 0.0) * 1e-6);
  cfg.phi_start = opt_num("scan.phi_start_rad", 0.0);
  cfg.phi_end = opt_num("scan.phi_end_rad", kTwoPi);
  cfg.steps = static_cast<int>(need_num("scan.steps"));
  if (cfg.steps < 2) throw config_error("scan.steps must be >= 2");
  cfg.phase_known = opt_bool("scan.phase_known", true);
  cfg.noise_sigma = opt_num("noise.sigma_um", 0.0) * 1e-6;
  cfg.seed = static_cast<std::uint64_t>(opt_num("noise.seed", 12345.0));
  cfg.out_traj = opt_str("output.traj_csv");
  cfg.out_refs = opt_str("output.refs_json");

  for (const auto& [full, e] : kv) {
    if (!e.used) throw config_error("unknown key '" + full + "'", e.line);
  }
  return cfg;
}

// Inclusive phase grid of the configured scan.
inline std::vector<double> config_phi_samples(const RunConfig& cfg) {
  std::vector<double> phis(static_cast<std::size_t>(cfg.steps));
  for (int i = 0; i < cfg.steps; ++i) {
    phis[static_cast<std::size_t>(i)] =
        cfg.phi_start + (cfg.phi_end - cfg.phi_start) * i / (cfg.steps - 1);
  }
  return phis;
}

}  // namespace wvlab::io
