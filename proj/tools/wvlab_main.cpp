// wvlab: weak-value interferometer laboratory CLI.
//
// Subcommands
//   scan-wv    weak-value parameter scans (CSV)
//   simulate   synthetic misaligned-interferometer phase scan (CSV + refs JSON)
//   fit        misalignment / beam-parameter estimation from a trajectory
//   verify     oracle-equivalence suites
//
// Exit codes: 0 ok, 1 verify failure, 2 configuration error,
// 3 unidentifiable / insufficient data, 4 non-convergence.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "wvlab/wvlab.hpp"

namespace {

using namespace wvlab;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitUnidentifiable = 3;
constexpr int kExitNoConvergence = 4;

// "a,b,c" or "lo:hi:n" -> list of values.
std::vector<double> parse_value_list(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::stringstream ss(text);
    std::string lo, hi, n;
    if (!std::getline(ss, lo, ':') || !std::getline(ss, hi, ':') || !std::getline(ss, n)) {
      throw io::config_error("range must be lo:hi:count, got '" + text + "'");
    }
    const double a = io::parse_double(lo, 0, "range start");
    const double b = io::parse_double(hi, 0, "range end");
    const int count = static_cast<int>(io::parse_double(n, 0, "range count"));
    if (count < 2) throw io::config_error("range count must be >= 2");
    for (int i = 0; i < count; ++i) out.push_back(a + (b - a) * i / (count - 1));
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(io::parse_double(tok, 0, "value list"));
  if (out.empty()) throw io::config_error("empty value list");
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::config_error("cannot open output file '" + path + "'");
  return os;
}

// --------------------------------------------------------------------------
// scan-wv

int cmd_scan_wv(const std::string& tan_alpha_list, const std::string& eta_list,
                int phi_steps, const std::string& out_path) {
  const auto tans = parse_value_list(tan_alpha_list);
  const auto etas = parse_value_list(eta_list);
  if (phi_steps < 2) throw io::config_error("--phi-steps must be >= 2");

  std::ofstream os = open_output(out_path);
  os << "phi_rad,tan_alpha,eta,re_wv,im_wv,intensity,pole\n";
  for (double t : tans) {
    for (double eta : etas) {
      for (int i = 0; i < phi_steps; ++i) {
        const double phi = kTwoPi * i / phi_steps;
        const auto pre = weakvalue::PreSelection::from_tan_alpha(t, phi);
        const double inten = weakvalue::intensity(pre, eta, phi);
        bool pole = false;
        cx wv(0.0, 0.0);
        try {
          wv = weakvalue::wv_finite(pre, eta);
        } catch (const orthogonal_boundary_error&) {
          pole = true;
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        os << io::g17(phi) << ',' << io::g17(t) << ',' << io::g17(eta) << ','
           << io::g17(pole ? nan : wv.real()) << ',' << io::g17(pole ? nan : wv.imag())
           << ',' << io::g17(inten) << ',' << (pole ? 1 : 0) << "\n";
      }
    }
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& config_path, std::string out_path,
                 std::string refs_path, std::uint64_t seed, bool seed_given) {
  std::ifstream is(config_path);
  if (!is) throw io::config_error("cannot open config file '" + config_path + "'");
  io::RunConfig cfg = io::parse_run_config(is);
  if (seed_given) cfg.seed = seed;
  if (out_path.empty()) out_path = cfg.out_traj;
  if (refs_path.empty()) refs_path = cfg.out_refs;
  if (out_path.empty()) throw io::config_error("no trajectory output path (--out or [output])");
  if (refs_path.empty()) {
    refs_path = out_path;
    const auto dot = refs_path.rfind('.');
    if (dot != std::string::npos) refs_path.erase(dot);
    refs_path += ".refs.json";
  }

  const auto pre = weakvalue::PreSelection::from_tan_alpha(cfg.tan_alpha, 0.0);
  const auto scan = beamlab::simulate_scan(cfg.misalignment, cfg.geometry, pre, cfg.eta,
                                           io::config_phi_samples(cfg), cfg.noise_sigma,
                                           cfg.seed);
  {
    std::ofstream os = open_output(out_path);
    io::write_trajectory_csv(os, io::rows_from_scan(scan, cfg.phase_known));
  }
  {
    std::ofstream os = open_output(refs_path);
    os << io::refs_json(scan, cfg.phase_known).dump(2) << "\n";
  }
  std::cout << "wrote " << out_path << " and " << refs_path << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// fit

struct FitOverrides {
  double tan_alpha = -1.0;
  double eta = -1.0;
  double lambda_nm = -1.0;
  double w0_um = -1.0;
  double z_m = -1.0;
  std::string misalignment;  // dx_um,dy_um,dthx_urad,dthy_urad (reverse mode)
};

int cmd_fit(const std::string& traj_path, const std::string& refs_path,
            const std::string& mode, const std::string& out_path, const FitOverrides& ov) {
  nlohmann::json result;
  int code = kExitOk;
  try {
    std::ifstream ts(traj_path);
    if (!ts) throw io::config_error("cannot open trajectory '" + traj_path + "'");
    const auto rows = io::read_trajectory_csv(ts);

    io::Refs refs;
    if (!refs_path.empty()) {
      std::ifstream rs(refs_path);
      if (!rs) throw io::config_error("cannot open refs '" + refs_path + "'");
      nlohmann::json j;
      rs >> j;
      refs = io::parse_refs(j);
    } else if (ov.tan_alpha <= 0.0 || ov.eta <= 0.0 || ov.lambda_nm <= 0.0 ||
               ov.w0_um <= 0.0 || ov.z_m <= 0.0) {
      throw io::config_error("without --refs, all of --tan-alpha --eta --lambda-nm "
                             "--w0-um --z-m are required");
    }
    if (ov.tan_alpha > 0.0) refs.tan_alpha = ov.tan_alpha;
    if (ov.eta > 0.0) refs.eta = ov.eta;
    if (ov.lambda_nm > 0.0 || ov.w0_um > 0.0 || ov.z_m > 0.0) {
      refs.geometry = beamlab::BeamGeometry(
          (ov.lambda_nm > 0.0 ? ov.lambda_nm : refs.geometry.wavelength * 1e9) * 1e-9,
          (ov.w0_um > 0.0 ? ov.w0_um : refs.geometry.waist * 1e6) * 1e-6,
          ov.z_m > 0.0 ? ov.z_m : refs.geometry.detector_z);
    }

    alignfit::FitProblem p;
    p.samples = io::samples_from_rows(rows);
    p.geometry = refs.geometry;
    p.pre = weakvalue::PreSelection::from_tan_alpha(refs.tan_alpha, 0.0);
    p.eta = refs.eta;

    alignfit::FitResult fit;
    if (mode == "linear") {
      p.mode = alignfit::FitMode::phase_known_linear;
      fit = alignfit::fit_misalignment(p);
    } else if (mode == "nonlinear") {
      p.mode = alignfit::FitMode::phase_unknown_nonlinear;
      fit = alignfit::fit_misalignment(p);
    } else if (mode == "reverse") {
      p.mode = alignfit::FitMode::reverse_beam;
      if (!ov.misalignment.empty()) {
        const auto v = parse_value_list(ov.misalignment);
        if (v.size() != 4) {
          throw io::config_error("--misalignment needs dx_um,dy_um,dthx_urad,dthy_urad");
        }
        p.known_misalignment = beamlab::MisalignmentParams(v[0] * 1e-6, v[1] * 1e-6,
                                                           v[2] * 1e-6, v[3] * 1e-6);
      } else if (refs.has_generator) {
        p.known_misalignment = refs.generator_truth;
      } else {
        throw io::config_error("reverse mode needs --misalignment or a refs generator block");
      }
      fit = alignfit::fit_beam_parameters(p);
    } else {
      throw io::config_error("unknown --mode '" + mode + "' (linear|nonlinear|reverse)");
    }

    result = io::fit_result_json(fit);
    if (!fit.converged) code = kExitNoConvergence;
    if (fit.converged && mode != "reverse") {
      const auto rep = alignfit::correction_report(p, fit);
      result["corrections_um_urad"] = {
          rep.corrections.delta_x * 1e6, rep.corrections.delta_y * 1e6,
          rep.corrections.delta_theta_x * 1e6, rep.corrections.delta_theta_y * 1e6};
      result["predicted_residual_radius_um"] = rep.predicted_radius * 1e6;
      result["correction_lines"] = rep.lines;
    }
  } catch (const unidentifiable_error& e) {
    result = io::error_json(kExitUnidentifiable, "unidentifiable", e.what());
    code = kExitUnidentifiable;
  }

  if (out_path.empty()) {
    std::cout << result.dump(2) << "\n";
  } else {
    std::ofstream os = open_output(out_path);
    os << result.dump(2) << "\n";
    std::cout << "wrote " << out_path << "\n";
  }
  return code;
}

// --------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  const auto results = verify::run_suite(suite, seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << verify::format_result(r) << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "verify: all checks passed" : "verify: FAILURES above") << "\n";
  return all_pass ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak-value interferometer laboratory"};
  app.require_subcommand(1);

  std::uint64_t seed = 12345;
  bool seed_given = false;
  app.add_option("--seed", seed, "deterministic seed (fixed default, never wall clock)")
      ->each([&](const std::string&) { seed_given = true; });

  auto* scan = app.add_subcommand("scan-wv", "weak-value parameter scan CSV");
  std::string scan_tan = "1.3323", scan_eta = "0.9904", scan_out = "scan_wv.csv";
  int scan_steps = 256;
  scan->add_option("--tan-alpha", scan_tan, "values 'a,b,c' or range 'lo:hi:n'");
  scan->add_option("--eta", scan_eta, "values 'a,b,c' or range 'lo:hi:n'");
  scan->add_option("--phi-steps", scan_steps, "phase samples over [0, 2pi)");
  scan->add_option("--out", scan_out, "output CSV path");

  auto* sim = app.add_subcommand("simulate", "synthetic misaligned phase scan");
  std::string sim_config, sim_out, sim_refs;
  sim->add_option("--config", sim_config, "run configuration file")->required();
  sim->add_option("--out", sim_out, "trajectory CSV path");
  sim->add_option("--refs", sim_refs, "references JSON path");

  auto* fit = app.add_subcommand("fit", "estimate misalignment or beam parameters");
  std::string fit_traj, fit_refs, fit_mode = "linear", fit_out;
  FitOverrides ov;
  fit->add_option("--traj", fit_traj, "trajectory CSV")->required();
  fit->add_option("--refs", fit_refs, "references JSON");
  fit->add_option("--mode", fit_mode, "linear | nonlinear | reverse");
  fit->add_option("--out", fit_out, "result JSON path (stdout if omitted)");
  fit->add_option("--tan-alpha", ov.tan_alpha, "override tan(alpha)");
  fit->add_option("--eta", ov.eta, "override eta");
  fit->add_option("--lambda-nm", ov.lambda_nm, "override wavelength");
  fit->add_option("--w0-um", ov.w0_um, "override waist");
  fit->add_option("--z-m", ov.z_m, "override detector distance");
  fit->add_option("--misalignment", ov.misalignment,
                  "known misalignment dx_um,dy_um,dthx_urad,dthy_urad (reverse mode)");

  auto* ver = app.add_subcommand("verify", "oracle-equivalence suites");
  std::string ver_suite = "all";
  ver->add_option("--suite", ver_suite, "universality | gaussian-exact | mixed-wv | visibility | all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (scan->parsed()) return cmd_scan_wv(scan_tan, scan_eta, scan_steps, scan_out);
    if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_refs, seed, seed_given);
    if (fit->parsed()) return cmd_fit(fit_traj, fit_refs, fit_mode, fit_out, ov);
    if (ver->parsed()) return cmd_verify(ver_suite, seed);
  } catch (const io::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const unidentifiable_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnidentifiable;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
