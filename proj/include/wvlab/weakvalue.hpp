// weakvalue.hpp
// The weak value of the projection on arm A and the scalar relations among
// the preselection (tan(alpha), phi), the pointer overlap eta, fringe
// visibility and output intensity.

#pragma once

#include <Eigen/Dense>

#include "wvlab/core.hpp"
#include "wvlab/qstate.hpp"

namespace wvlab::weakvalue {

// Preselected path state cos(alpha)|A> + sin(alpha) e^{i phi}|B>.
// alpha is stored as an angle so tan(alpha) -> infinity stays representable
// at the type level; alpha in [0, pi/2) keeps it finite.
struct PreSelection {
  double alpha = 0.0;
  double phi = 0.0;

  PreSelection() = default;
  PreSelection(double a, double p) : alpha(a), phi(wrap_angle(p)) {
    if (!(alpha >= 0.0) || alpha >= 0.5 * kPi) {
      throw std::invalid_argument("PreSelection: alpha must lie in [0, pi/2)");
    }
  }

  static PreSelection from_tan_alpha(double tan_alpha, double phi) {
    if (!(tan_alpha >= 0.0) || !std::isfinite(tan_alpha)) {
      throw std::invalid_argument("PreSelection: tan(alpha) must be finite and >= 0");
    }
    return PreSelection(std::atan(tan_alpha), phi);
  }

  double tan_alpha() const { return std::tan(alpha); }

  qstate::Ket ket() const {
    Eigen::VectorXcd a(2);
    a << cx(std::cos(alpha), 0.0), std::polar(std::sin(alpha), phi);
    return qstate::Ket({2}, std::move(a));
  }
};

struct WeakValueRecord {
  cx value;
  double alpha = 0.0;
  double phi = 0.0;
  double eta = 1.0;
};

// (P_A)_w = 1 / (1 + tan(alpha) e^{i phi}), couplings neglected.
inline cx wv_ideal(const PreSelection& pre) {
  const cx den = 1.0 + pre.tan_alpha() * std::polar(1.0, pre.phi);
  if (std::abs(den) < tol::kPoleDenominator) {
    throw orthogonal_boundary_error("wv_ideal: orthogonal pre/postselection");
  }
  return 1.0 / den;
}

// (P_A)_w = (1 + tan(alpha) eta e^{-i phi}) / (1 + tan^2 + 2 tan eta cos phi),
// the decoherence-corrected weak value. eta = 1 reduces exactly to wv_ideal
// (delegated so the identity holds bitwise).
inline cx wv_finite(const PreSelection& pre, double eta) {
  if (!(eta >= 0.0) || eta > 1.0 + tol::kAlgebraic) {
    throw std::invalid_argument("wv_finite: eta must lie in [0, 1]");
  }
  if (eta == 1.0) return wv_ideal(pre);
  const double t = pre.tan_alpha();
  const double den = 1.0 + t * t + 2.0 * t * eta * std::cos(pre.phi);
  if (den < tol::kPoleDenominator) {
    throw orthogonal_boundary_error("wv_finite: orthogonal boundary conditions");
  }
  return (1.0 + t * eta * std::polar(1.0, -pre.phi)) / den;
}

inline WeakValueRecord wv_finite_record(const PreSelection& pre, double eta) {
  return WeakValueRecord{wv_finite(pre, eta), pre.alpha, pre.phi, eta};
}

// Tr(rho_post A rho_pre) / Tr(rho_post rho_pre), the mixed-state weak value.
inline cx wv_mixed(const qstate::DensityMatrix& rho_pre,
                   const qstate::DensityMatrix& rho_post,
                   const Eigen::MatrixXcd& a) {
  const cx den = (rho_post.mat * rho_pre.mat).trace();
  if (std::abs(den) < tol::kOverlapTrace) {
    throw orthogonal_boundary_error("wv_mixed: orthogonal boundary conditions");
  }
  return (rho_post.mat * a * rho_pre.mat).trace() / den;
}

// Effective preselection density matrix of the path after the couplings have
// reduced the interarm coherence to eta.
inline qstate::DensityMatrix path_density(const PreSelection& pre, double eta) {
  const double c = std::cos(pre.alpha), s = std::sin(pre.alpha);
  Eigen::MatrixXcd m(2, 2);
  m(0, 0) = c * c;
  m(1, 1) = s * s;
  m(0, 1) = c * s * eta * std::polar(1.0, -pre.phi);
  m(1, 0) = std::conj(m(0, 1));
  return qstate::DensityMatrix({2}, std::move(m));
}

inline Eigen::MatrixXcd projector_arm_a() {
  Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(2, 2);
  p(0, 0) = 1.0;
  return p;
}

// Fringe visibility V = eta * 2 tan(alpha) / (1 + tan^2(alpha)).
inline double visibility(const PreSelection& pre, double eta) {
  const double t = pre.tan_alpha();
  return eta * 2.0 * t / (1.0 + t * t);
}

inline double eta_from_visibility(double v, const PreSelection& pre) {
  const double t = pre.tan_alpha();
  if (t <= 0.0) throw std::invalid_argument("eta_from_visibility: tan(alpha) must be > 0");
  return v * (1.0 + t * t) / (2.0 * t);
}

// Phase-dependent output intensity, arbitrary units (callers scale).
inline double intensity(const PreSelection& pre, double eta, double phi_scan) {
  const double t = pre.tan_alpha();
  return 1.0 + t * t + 2.0 * t * eta * std::cos(phi_scan);
}

// Stationary points of Re (P_A)_w over tan(alpha) at phi = pi. Setting the
// t-derivative of (1 - t eta)/(1 + t^2 - 2 t eta) to zero gives
// eta (1 + t^2) = 2 t, i.e. t_pm = (1 pm sqrt(1 - eta^2)) / eta. The closed
// form is gated by a dense scan oracle in the verification suite.
struct AmplificationExtrema {
  double t_minus = 0.0;    // location of the positive extremum
  double wv_at_t_minus = 0.0;
  double t_plus = 0.0;     // location of the negative extremum
  double wv_at_t_plus = 0.0;
};

inline AmplificationExtrema extremal_amplification(double eta) {
  if (!(eta > 0.0) || eta >= 1.0) {
    throw orthogonal_boundary_error(
        "extremal_amplification: unbounded at eta = 1 (pole), undefined for eta <= 0");
  }
  const double s = std::sqrt(1.0 - eta * eta);
  AmplificationExtrema e;
  e.t_minus = (1.0 - s) / eta;
  e.t_plus = (1.0 + s) / eta;
  auto re_wv_at_pi = [eta](double t) {
    return (1.0 - t * eta) / (1.0 + t * t - 2.0 * t * eta);
  };
  e.wv_at_t_minus = re_wv_at_pi(e.t_minus);
  e.wv_at_t_plus = re_wv_at_pi(e.t_plus);
  return e;
}

}  // namespace wvlab::weakvalue
