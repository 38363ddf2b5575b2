// alignfit.hpp
// Misalignment estimation from a phase-scanned centroid trajectory, by least
// squares on the detector model. Three modes:
//
//   phase_known_linear     phi known per sample; the model is linear in the
//                          four misalignment parameters -> closed-form
//                          weighted least squares.
//   phase_unknown_nonlinear  phi unknown; fits an affine phase ramp
//                          phi_i = phi0 + scale * i jointly with the
//                          misalignment (Levenberg-Marquardt), seeding the
//                          phases from the intensity column.
//   reverse_beam           misalignment known, beam parameters (zR, z)
//                          estimated instead.
//
// The centroid model for known per-sample weak value wv = Re + i Im:
//   Rx = dx (Re + z/zR Im) + dthy ( z Re - zR Im)
//   Ry = dy (Re + z/zR Im) + dthx (-z Re + zR Im)

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "wvlab/beamlab.hpp"
#include "wvlab/core.hpp"
#include "wvlab/weakvalue.hpp"

namespace wvlab::alignfit {

using beamlab::BeamGeometry;
using beamlab::MisalignmentParams;
using beamlab::TrajectorySample;
using weakvalue::PreSelection;

enum class FitMode { phase_known_linear, phase_unknown_nonlinear, reverse_beam };

struct FitProblem {
  std::vector<TrajectorySample> samples;  // SI units
  BeamGeometry geometry;                  // known geometry (initial guess in reverse mode)
  PreSelection pre;                       // tan(alpha) from single-arm intensities
  double eta = 1.0;                       // from visibility
  FitMode mode = FitMode::phase_known_linear;
  MisalignmentParams known_misalignment;  // reverse mode input

  // Inverse-variance weighting is used when every sample carries a positive
  // noise scale; otherwise the fit is unweighted.
  bool weighted() const {
    if (samples.empty()) return false;
    for (const auto& s : samples) {
      if (!(s.sigma_r > 0.0)) return false;
    }
    return true;
  }
};

struct FitResult {
  FitMode mode = FitMode::phase_known_linear;
  MisalignmentParams params;      // misalignment modes
  double phi0 = 0.0;              // nonlinear mode: fitted phase offset
  double phi_scale = 0.0;         // nonlinear mode: fitted phase step per sample
  double rayleigh = 0.0;          // reverse mode: fitted zR
  double detector_z = 0.0;        // reverse mode: fitted z
  Eigen::MatrixXd covariance;     // 4x4 misalignment block, or 2x2 (zR, z)
  std::vector<double> sigma;      // sqrt(diag(covariance))
  double residual_rms = 0.0;      // m, unweighted
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace; // accepted costs, monotone non-increasing
};

namespace detail {

inline void model_coefficients(cx wv, double z, double zr, double& pos_coef,
                               double& ang_coef_x, double& ang_coef_y) {
  const double re = wv.real(), im = wv.imag();
  pos_coef = re + z / zr * im;     // multiplies dx (x row) and dy (y row)
  ang_coef_x = z * re - zr * im;   // multiplies dthy in the x row
  ang_coef_y = -z * re + zr * im;  // multiplies dthx in the y row
}

inline std::vector<cx> weak_values(const FitProblem& p, const std::vector<double>& phis) {
  std::vector<cx> wv(phis.size());
  for (std::size_t i = 0; i < phis.size(); ++i) {
    wv[i] = weakvalue::wv_finite(PreSelection(p.pre.alpha, phis[i]), p.eta);
  }
  return wv;
}

// Residual vector (2N) of data minus model, scaled by per-sample weights.
inline Eigen::VectorXd residuals_linear_model(const FitProblem& p,
                                              const std::vector<double>& phis,
                                              const Eigen::Vector4d& m, double z,
                                              double zr,
                                              const Eigen::VectorXd& wts) {
  const auto wv = weak_values(p, phis);
  Eigen::VectorXd r(2 * static_cast<long>(p.samples.size()));
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    double pc, ax, ay;
    model_coefficients(wv[i], z, zr, pc, ax, ay);
    const double mx = m[0] * pc + m[3] * ax;
    const double my = m[1] * pc + m[2] * ay;
    r[2 * static_cast<long>(i)] = wts[static_cast<long>(i)] * (p.samples[i].rx - mx);
    r[2 * static_cast<long>(i) + 1] = wts[static_cast<long>(i)] * (p.samples[i].ry - my);
  }
  return r;
}

inline Eigen::VectorXd sample_weights(const FitProblem& p) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<long>(p.samples.size()));
  if (p.weighted()) {
    for (std::size_t i = 0; i < p.samples.size(); ++i) {
      w[static_cast<long>(i)] = 1.0 / p.samples[i].sigma_r;
    }
  }
  return w;
}

inline double unweighted_rms(const FitProblem& p, const std::vector<double>& phis,
                             const Eigen::Vector4d& m, double z, double zr) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<long>(p.samples.size()));
  const Eigen::VectorXd r = residuals_linear_model(p, phis, m, z, zr, ones);
  return std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
}

// --------------------------------------------------------------------------
// Levenberg-Marquardt with numeric central-difference Jacobian. The damping
// uses Marquardt scaling by diag(J^T J); accepted steps never increase the
// cost, and the accepted-cost trace is part of the result contract.

struct LmOptions {
  int max_iterations = 200;
  double cost_rel_tol = 1e-12;
  double step_tol = 1e-14;
  double lambda0 = 1e-3;
};

struct LmOutcome {
  Eigen::VectorXd x;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;
  Eigen::MatrixXd jtj;
  long residual_count = 0;
};

template <typename Fn>
LmOutcome lm_minimize(const Fn& resid, Eigen::VectorXd x0, const Eigen::VectorXd& fd_step,
                      const LmOptions& opt = LmOptions{}) {
  const int np = static_cast<int>(x0.size());
  LmOutcome out;
  out.x = std::move(x0);
  Eigen::VectorXd r = resid(out.x);
  out.residual_count = r.size();
  out.cost = r.squaredNorm();
  out.cost_trace.push_back(out.cost);
  double lambda = opt.lambda0;
  Eigen::MatrixXd jac(r.size(), np);

  for (out.iterations = 0; out.iterations < opt.max_iterations; ++out.iterations) {
    for (int j = 0; j < np; ++j) {
      const double h = std::max(fd_step[j], 1e-7 * std::abs(out.x[j]));
      Eigen::VectorXd xp = out.x, xm = out.x;
      xp[j] += h;
      xm[j] -= h;
      jac.col(j) = (resid(xp) - resid(xm)) / (2.0 * h);
    }
    out.jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;

    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd a = out.jtj;
      for (int j = 0; j < np; ++j) {
        a(j, j) += lambda * std::max(out.jtj(j, j), 1e-30);
      }
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd xn = out.x + step;
      const Eigen::VectorXd rn = resid(xn);
      const double cn = rn.squaredNorm();
      if (cn <= out.cost) {
        const double drop = out.cost - cn;
        out.x = xn;
        r = rn;
        out.cost = cn;
        out.cost_trace.push_back(cn);
        lambda = std::max(lambda * 0.1, 1e-14);
        accepted = true;
        if (drop <= opt.cost_rel_tol * std::max(out.cost, 1e-300) ||
            step.norm() <= opt.step_tol * (1.0 + out.x.norm())) {
          out.converged = true;
        }
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }
    if (!accepted) {
      // Damping exhausted: we are at a (numerical) stationary point.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  return out;
}

inline void require_finite_phases(const FitProblem& p) {
  for (const auto& s : p.samples) {
    if (!std::isfinite(s.phi)) {
      throw unidentifiable_error("fit: phase-known mode needs finite phi for every sample");
    }
  }
}

inline std::vector<double> phases_of(const FitProblem& p) {
  std::vector<double> phis(p.samples.size());
  for (std::size_t i = 0; i < p.samples.size(); ++i) phis[i] = p.samples[i].phi;
  return phis;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear mode.

inline FitResult fit_linear(const FitProblem& p) {
  if (p.samples.size() < 4) {
    throw unidentifiable_error("fit: insufficient samples (need >= 4 for linear mode)");
  }
  detail::require_finite_phases(p);
  const auto phis = detail::phases_of(p);
  const auto wv = detail::weak_values(p, phis);
  const double z = p.geometry.detector_z;
  const double zr = p.geometry.rayleigh();
  const Eigen::VectorXd wts = detail::sample_weights(p);

  const long n = static_cast<long>(p.samples.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 4);
  Eigen::VectorXd b(2 * n);
  for (long i = 0; i < n; ++i) {
    double pc, ax, ay;
    detail::model_coefficients(wv[static_cast<std::size_t>(i)], z, zr, pc, ax, ay);
    const double w = wts[i];
    a(2 * i, 0) = w * pc;
    a(2 * i, 3) = w * ax;
    a(2 * i + 1, 1) = w * pc;
    a(2 * i + 1, 2) = w * ay;
    b[2 * i] = w * p.samples[static_cast<std::size_t>(i)].rx;
    b[2 * i + 1] = w * p.samples[static_cast<std::size_t>(i)].ry;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin >= tol::kConditionMax) {
    throw unidentifiable_error(
        "fit: unidentifiable geometry (design matrix condition number >= 1e8)");
  }
  const Eigen::Vector4d x = svd.solve(b);
  const Eigen::VectorXd res = b - a * x;
  const double dof = static_cast<double>(2 * n - 4);
  const double s2 = res.squaredNorm() / dof;

  FitResult r;
  r.mode = FitMode::phase_known_linear;
  r.params = MisalignmentParams(x[0], x[1], x[2], x[3]);
  r.covariance = s2 * (a.transpose() * a).inverse();
  r.sigma.resize(4);
  for (int j = 0; j < 4; ++j) r.sigma[static_cast<std::size_t>(j)] = std::sqrt(r.covariance(j, j));
  r.residual_rms = detail::unweighted_rms(p, phis, x, z, zr);
  r.iterations = 1;
  r.converged = true;
  r.cost_trace = {res.squaredNorm()};
  return r;
}

// ---------------------------------------------------------------------------
// Nonlinear (phase-unknown) mode.

namespace detail {

// Initial phases from the intensity column: invert
// I = C (1 + t^2 + 2 t eta cos phi) for cos phi, then reconstruct the branch
// by continuity of the unwrapped sequence. `lead_sign` selects the sign of
// the first sample's angle (both candidates are tried by the driver).
inline std::vector<double> phases_from_intensity(const FitProblem& p, double lead_sign) {
  const double t = p.pre.tan_alpha();
  double imax = p.samples[0].intensity, imin = p.samples[0].intensity;
  for (const auto& s : p.samples) {
    imax = std::max(imax, s.intensity);
    imin = std::min(imin, s.intensity);
  }
  const double scale = (imax + imin) / (2.0 * (1.0 + t * t));
  if (!(scale > 0.0)) {
    throw unidentifiable_error("fit: intensity column unusable for phase recovery");
  }
  std::vector<double> phi(p.samples.size());
  std::vector<double> base(p.samples.size());
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    const double c =
        std::clamp((p.samples[i].intensity / scale - 1.0 - t * t) / (2.0 * t * p.eta),
                   -1.0, 1.0);
    base[i] = std::acos(c);  // in [0, pi]
  }
  phi[0] = lead_sign * base[0];
  for (std::size_t i = 1; i < phi.size(); ++i) {
    const double pred = (i == 1) ? phi[0] : 2.0 * phi[i - 1] - phi[i - 2];
    double best = 0.0, best_err = std::numeric_limits<double>::infinity();
    for (double sgn : {1.0, -1.0}) {
      const double cand = sgn * base[i] + kTwoPi * std::round((pred - sgn * base[i]) / kTwoPi);
      const double err = std::abs(cand - pred);
      if (err < best_err) {
        best_err = err;
        best = cand;
      }
    }
    phi[i] = best;
  }
  return phi;
}

// Reflection phi -> -phi combined with the matching misalignment reflection
// leaves the model invariant; use it to canonicalize the phase ramp to a
// positive scale.
inline void mirror_solution(Eigen::VectorXd& x, double z, double zr) {
  Eigen::Matrix2d mx, my, flip;
  mx << 1.0, z, z / zr, -zr;
  my << 1.0, -z, z / zr, zr;
  flip << 1.0, 0.0, 0.0, -1.0;
  const Eigen::Vector2d vx = mx.inverse() * flip * mx * Eigen::Vector2d(x[0], x[3]);
  const Eigen::Vector2d vy = my.inverse() * flip * my * Eigen::Vector2d(x[1], x[2]);
  x[0] = vx[0];
  x[3] = vx[1];
  x[1] = vy[0];
  x[2] = vy[1];
  x[4] = -x[4];
  x[5] = -x[5];
}

}  // namespace detail

inline FitResult fit_nonlinear(const FitProblem& p) {
  if (p.samples.size() < 6) {
    throw unidentifiable_error("fit: insufficient samples (need >= 6 for nonlinear mode)");
  }
  const double z = p.geometry.detector_z;
  const double zr = p.geometry.rayleigh();
  const Eigen::VectorXd wts = detail::sample_weights(p);
  const long n = static_cast<long>(p.samples.size());

  auto residual_fn = [&](const Eigen::VectorXd& x) {
    std::vector<double> phis(p.samples.size());
    for (std::size_t i = 0; i < p.samples.size(); ++i) {
      phis[i] = x[4] + x[5] * static_cast<double>(i);
    }
    return detail::residuals_linear_model(p, phis, x.head<4>(), z, zr, wts);
  };

  Eigen::VectorXd fd(6);
  fd << 1e-9, 1e-9, 1e-9, 1e-9, 1e-7, 1e-7;

  detail::LmOutcome best;
  bool have_best = false;
  for (double lead_sign : {1.0, -1.0}) {
    std::vector<double> phi0;
    try {
      phi0 = detail::phases_from_intensity(p, lead_sign);
    } catch (const unidentifiable_error&) {
      continue;
    }
    // Affine ramp through the recovered phases.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (long i = 0; i < n; ++i) {
      sx += static_cast<double>(i);
      sy += phi0[static_cast<std::size_t>(i)];
      sxx += static_cast<double>(i) * static_cast<double>(i);
      sxy += static_cast<double>(i) * phi0[static_cast<std::size_t>(i)];
    }
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) continue;
    const double ramp = (static_cast<double>(n) * sxy - sx * sy) / denom;
    const double offset = (sy - ramp * sx) / static_cast<double>(n);

    // Misalignment seed: linear fit at the recovered phases.
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(6);
    try {
      FitProblem seeded = p;
      for (std::size_t i = 0; i < seeded.samples.size(); ++i) {
        seeded.samples[i].phi = phi0[i];
      }
      seeded.mode = FitMode::phase_known_linear;
      const FitResult lin = fit_linear(seeded);
      x0 << lin.params.delta_x, lin.params.delta_y, lin.params.delta_theta_x,
          lin.params.delta_theta_y, offset, ramp;
    } catch (const unidentifiable_error&) {
      x0 << 0, 0, 0, 0, offset, ramp;
    }

    detail::LmOutcome out = detail::lm_minimize(residual_fn, x0, fd);
    if (!have_best || out.cost < best.cost) {
      best = std::move(out);
      have_best = true;
    }
  }
  if (!have_best) {
    throw unidentifiable_error("fit: could not construct a phase initialization");
  }

  if (best.x[5] < 0.0) {
    detail::mirror_solution(best.x, z, zr);
    // The mirrored point is an exact symmetry of the model; refresh the
    // cached cost trace end so covariance uses the canonical Jacobian.
    detail::LmOutcome polished = detail::lm_minimize(residual_fn, best.x, fd);
    polished.cost_trace = best.cost_trace;
    polished.iterations += best.iterations;
    polished.converged = polished.converged && best.converged;
    best = std::move(polished);
  }

  const double dof = static_cast<double>(best.residual_count - 6);
  const double s2 = best.cost / std::max(dof, 1.0);
  const Eigen::MatrixXd cov6 = s2 * best.jtj.inverse();

  FitResult r;
  r.mode = FitMode::phase_unknown_nonlinear;
  r.params = MisalignmentParams(best.x[0], best.x[1], best.x[2], best.x[3]);
  r.phi0 = wrap_angle(best.x[4]);
  r.phi_scale = best.x[5];
  r.covariance = cov6.topLeftCorner(4, 4);
  r.sigma.resize(4);
  for (int j = 0; j < 4; ++j) r.sigma[static_cast<std::size_t>(j)] = std::sqrt(r.covariance(j, j));
  {
    std::vector<double> phis(p.samples.size());
    for (std::size_t i = 0; i < p.samples.size(); ++i) {
      phis[i] = best.x[4] + best.x[5] * static_cast<double>(i);
    }
    r.residual_rms = detail::unweighted_rms(p, phis, best.x.head<4>(), z, zr);
  }
  r.iterations = best.iterations;
  r.converged = best.converged;
  r.cost_trace = best.cost_trace;
  return r;
}

inline FitResult fit_misalignment(const FitProblem& p) {
  switch (p.mode) {
    case FitMode::phase_known_linear:
      return fit_linear(p);
    case FitMode::phase_unknown_nonlinear:
      return fit_nonlinear(p);
    case FitMode::reverse_beam:
      throw std::invalid_argument("fit_misalignment: use fit_beam_parameters for reverse mode");
  }
  throw std::invalid_argument("fit_misalignment: unknown mode");
}

// ---------------------------------------------------------------------------
// Reverse task: beam parameters from a known misalignment.

inline FitResult fit_beam_parameters(const FitProblem& p) {
  if (p.samples.size() < 4) {
    throw unidentifiable_error("fit: insufficient samples (need >= 4 for reverse mode)");
  }
  detail::require_finite_phases(p);
  const MisalignmentParams& m = p.known_misalignment;
  const bool has_position = std::abs(m.delta_x) > 0.0 || std::abs(m.delta_y) > 0.0;
  const bool has_angle = std::abs(m.delta_theta_x) > 0.0 || std::abs(m.delta_theta_y) > 0.0;
  if (!has_position || !has_angle) {
    throw unidentifiable_error(
        "fit: beam parameters unidentifiable (need nonzero position and angle misalignment)");
  }
  const auto phis = detail::phases_of(p);
  const Eigen::VectorXd wts = detail::sample_weights(p);
  const Eigen::Vector4d mis(m.delta_x, m.delta_y, m.delta_theta_x, m.delta_theta_y);

  auto residual_fn = [&](const Eigen::VectorXd& x) {
    return detail::residuals_linear_model(p, phis, mis, x[1], x[0], wts);
  };

  Eigen::VectorXd x0(2);
  x0 << p.geometry.rayleigh(), p.geometry.detector_z;
  Eigen::VectorXd fd(2);
  fd << 1e-7, 1e-7;
  detail::LmOutcome out = detail::lm_minimize(residual_fn, x0, fd);

  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.jtj);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0.0) || smax / smin >= square(tol::kConditionMax)) {
      throw unidentifiable_error("fit: beam parameters unidentifiable (rank-deficient Jacobian)");
    }
  }

  const double dof = static_cast<double>(out.residual_count - 2);
  const double s2 = out.cost / std::max(dof, 1.0);

  FitResult r;
  r.mode = FitMode::reverse_beam;
  r.rayleigh = out.x[0];
  r.detector_z = out.x[1];
  r.covariance = s2 * out.jtj.inverse();
  r.sigma = {std::sqrt(r.covariance(0, 0)), std::sqrt(r.covariance(1, 1))};
  r.residual_rms = detail::unweighted_rms(p, phis, mis, out.x[1], out.x[0]);
  r.iterations = out.iterations;
  r.converged = out.converged;
  r.cost_trace = out.cost_trace;
  return r;
}

// ---------------------------------------------------------------------------
// Correction report.

struct CorrectionReport {
  MisalignmentParams corrections;  // apply these (signed) moves/tilts
  double predicted_radius = 0.0;   // residual trajectory radius at 1 sigma
  std::vector<std::string> lines;
};

inline CorrectionReport correction_report(const FitProblem& p, const FitResult& r) {
  if (!r.converged) {
    throw std::invalid_argument("correction_report: fit did not converge");
  }
  CorrectionReport rep;
  rep.corrections = MisalignmentParams(-r.params.delta_x, -r.params.delta_y,
                                       -r.params.delta_theta_x, -r.params.delta_theta_y);

  char buf[160];
  auto emit = [&](double value, double sigma, const char* what, const char* unit,
                  double unit_scale) {
    if (std::abs(value) < 1e-12) return;  // already aligned in this coordinate
    std::snprintf(buf, sizeof(buf), "%s by %+.3f %s (fit sigma %.3f %s)", what,
                  -value * unit_scale, unit, sigma * unit_scale, unit);
    rep.lines.emplace_back(buf);
  };
  emit(r.params.delta_x, r.sigma[0], "move arm A in x", "um", 1e6);
  emit(r.params.delta_y, r.sigma[1], "move arm A in y", "um", 1e6);
  emit(r.params.delta_theta_x, r.sigma[2], "tilt arm A about x", "urad", 1e6);
  emit(r.params.delta_theta_y, r.sigma[3], "tilt arm A about y", "urad", 1e6);

  // Residual trajectory radius if the remaining misalignment sits at the
  // one-sigma level of the fit.
  const MisalignmentParams msig(r.sigma[0], r.sigma[1], r.sigma[2], r.sigma[3]);
  double radius = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double phi = kTwoPi * i / 64.0;
    const cx wv = weakvalue::wv_finite(PreSelection(p.pre.alpha, phi), p.eta);
    const beamlab::Vec2 c = beamlab::centroid_model(msig, p.geometry, wv);
    radius = std::max(radius, std::hypot(c.x, c.y));
  }
  rep.predicted_radius = radius;
  return rep;
}

}  // namespace wvlab::alignfit
