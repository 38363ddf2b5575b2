// beamlab.hpp
// Gaussian-beam geometry and the interferometer-misalignment picture: a
// relative displacement/tilt between the arms acts on the beam's transverse
// modes exactly like a pair of Gaussian pointer couplings. The centroid of
// the postselected output beam then traces a phase-dependent trajectory on
// the detector whose shape encodes all four misalignment parameters.
//
// Sign conventions (right handed, beam along +z): a tilt delta_theta_y moves
// the beam towards +x, a tilt delta_theta_x towards -y, so the pointer
// momentum kicks are dp_x = +k delta_theta_y and dp_y = -k delta_theta_x.
// Detector propagation is R = q + z p / k per transverse axis.

#pragma once

#include <vector>

#include "wvlab/core.hpp"
#include "wvlab/mzi.hpp"
#include "wvlab/weakvalue.hpp"

namespace wvlab::beamlab {

using weakvalue::PreSelection;

inline double rayleigh_range(double wavelength, double waist) {
  if (!(wavelength > 0.0) || !(waist > 0.0)) {
    throw std::invalid_argument("rayleigh_range: wavelength and waist must be > 0");
  }
  return kPi * waist * waist / wavelength;
}

struct BeamGeometry {
  double wavelength = 780e-9;  // m
  double waist = 0.5e-3;       // w0, m (beam mode ~ e^{-x^2/w0^2})
  double detector_z = 1.0;     // distance waist -> detector along the beam, m

  BeamGeometry() = default;
  BeamGeometry(double lambda, double w0, double z)
      : wavelength(lambda), waist(w0), detector_z(z) {
    if (!(lambda > 0.0) || !(w0 > 0.0) || !(z > 0.0)) {
      throw std::invalid_argument("BeamGeometry: all lengths must be > 0");
    }
  }

  double rayleigh() const { return rayleigh_range(wavelength, waist); }
  double wavenumber() const { return kTwoPi / wavelength; }
  // Pointer width of the transverse mode: dQ = w0/2 makes dP = 1/w0 and all
  // Rayleigh-range identities exact.
  double pointer_width() const { return 0.5 * waist; }
};

struct MisalignmentParams {
  double delta_x = 0.0;        // m
  double delta_y = 0.0;        // m
  double delta_theta_x = 0.0;  // rad
  double delta_theta_y = 0.0;  // rad

  MisalignmentParams() = default;
  MisalignmentParams(double dx, double dy, double dthx, double dthy)
      : delta_x(dx), delta_y(dy), delta_theta_x(dthx), delta_theta_y(dthy) {
    if (std::abs(dthx) >= 1e-2 || std::abs(dthy) >= 1e-2) {
      throw std::invalid_argument("MisalignmentParams: |angle| >= 10 mrad breaks paraxiality");
    }
  }

  MisalignmentParams operator+(const MisalignmentParams& o) const {
    return MisalignmentParams(delta_x + o.delta_x, delta_y + o.delta_y,
                              delta_theta_x + o.delta_theta_x,
                              delta_theta_y + o.delta_theta_y);
  }
  MisalignmentParams operator-(const MisalignmentParams& o) const {
    return MisalignmentParams(delta_x - o.delta_x, delta_y - o.delta_y,
                              delta_theta_x - o.delta_theta_x,
                              delta_theta_y - o.delta_theta_y);
  }
};

struct AxisShift {
  double delta_q = 0.0;
  double delta_p = 0.0;
};

struct PointerShifts {
  AxisShift x;
  AxisShift y;
};

// Misalignment -> (position, momentum) shift of the two transverse pointers.
inline PointerShifts misalignment_to_shifts(const MisalignmentParams& m,
                                            const BeamGeometry& g) {
  const double k = g.wavenumber();
  return PointerShifts{
      AxisShift{m.delta_x, k * m.delta_theta_y},
      AxisShift{m.delta_y, -k * m.delta_theta_x},
  };
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Centroid displacement on the detector for a given weak value:
//   dR = (dx + z dthy, dy - z dthx) Re + (z/zR dx - zR dthy, z/zR dy + zR dthx) Im.
// Evaluated through the exact Gaussian shift formulas plus free propagation,
// which reduces to the expression above identically; linear in the
// misalignment for fixed weak value.
inline Vec2 centroid_model(const MisalignmentParams& m, const BeamGeometry& g, cx wv) {
  const PointerShifts s = misalignment_to_shifts(m, g);
  const double width = g.pointer_width();
  const double k = g.wavenumber();
  const double z = g.detector_z;
  const mzi::GaussianShift sx = mzi::gaussian_shift_exact(s.x.delta_q, s.x.delta_p, width, wv);
  const mzi::GaussianShift sy = mzi::gaussian_shift_exact(s.y.delta_q, s.y.delta_p, width, wv);
  return Vec2{sx.mean_q + z * sx.mean_p / k, sy.mean_q + z * sy.mean_p / k};
}

struct TrajectorySample {
  double phi = 0.0;       // rad; NaN in phase-unknown datasets
  double rx = 0.0;        // m, centroid on detector
  double ry = 0.0;        // m
  double intensity = 0.0; // arbitrary units
  double sigma_r = 0.0;   // m, per-sample noise scale (0 = noiseless)
};

struct SimulatedScan {
  std::vector<TrajectorySample> samples;
  Vec2 arm_a;  // blocked-B single-arm centroid (phase independent)
  Vec2 arm_b;  // reference, zero by construction
  PreSelection pre;
  double eta = 1.0;
  BeamGeometry geometry;
  MisalignmentParams truth;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Synthetic phase scan: single-arm references plus the interference
// trajectory with isotropic Gaussian centroid noise. Noise is drawn from a
// counter-based generator indexed by the sample number, so the output is
// independent of evaluation order and bit-reproducible for a fixed seed.
inline SimulatedScan simulate_scan(const MisalignmentParams& m, const BeamGeometry& g,
                                   const PreSelection& pre, double eta,
                                   const std::vector<double>& phi_samples,
                                   double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) {
    throw std::invalid_argument("simulate_scan: noise_sigma must be >= 0");
  }
  SimulatedScan out;
  out.arm_a = centroid_model(m, g, cx(1.0, 0.0));
  out.arm_b = Vec2{0.0, 0.0};
  out.pre = pre;
  out.eta = eta;
  out.geometry = g;
  out.truth = m;
  out.noise_sigma = noise_sigma;
  out.seed = seed;
  out.samples.resize(phi_samples.size());
  for (std::size_t i = 0; i < phi_samples.size(); ++i) {
    const double phi = phi_samples[i];
    const PreSelection pre_i(pre.alpha, phi);
    TrajectorySample& s = out.samples[i];
    s.phi = phi;
    s.intensity = weakvalue::intensity(pre_i, eta, phi);
    const Vec2 r = centroid_model(m, g, weakvalue::wv_finite(pre_i, eta));
    double nx = 0.0, ny = 0.0;
    if (noise_sigma > 0.0) {
      const auto [g1, g2] = normal_pair(seed, i);
      nx = noise_sigma * g1;
      ny = noise_sigma * g2;
    }
    s.rx = r.x + nx;
    s.ry = r.y + ny;
    s.sigma_r = noise_sigma;
  }
  return out;
}

// Oracle helper: the exact interferometer model equivalent to a misaligned
// beam pair, with the residual imperfection channel sized so the total
// overlap equals the requested eta.
inline mzi::ExperimentModel oracle_experiment(const MisalignmentParams& m,
                                              const BeamGeometry& g,
                                              const PreSelection& pre, double eta,
                                              int grid_n = 1024) {
  const PointerShifts s = misalignment_to_shifts(m, g);
  const double width = g.pointer_width();
  mzi::ExperimentModel em;
  em.pre = pre;
  em.couplings.push_back(
      mzi::CouplingSpec::gaussian_combined("x", s.x.delta_q, s.x.delta_p, width, grid_n));
  em.couplings.push_back(
      mzi::CouplingSpec::gaussian_combined("y", s.y.delta_q, s.y.delta_p, width, grid_n));
  const double intrinsic = em.couplings[0].eta() * em.couplings[1].eta();
  const double eta_o = eta / intrinsic;
  if (eta_o > 1.0 + 1e-12) {
    throw std::invalid_argument(
        "oracle_experiment: requested eta exceeds the overlap of the shifts alone");
  }
  em.eta_imperfection = std::min(eta_o, 1.0);
  return em;
}

}  // namespace wvlab::beamlab
