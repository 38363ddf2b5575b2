// pointer.hpp
// External systems ("pointers") coupled to the particle path: the analytic
// minimum-uncertainty Gaussian, a uniform-grid wavefunction used as the
// brute-force oracle, and the polarization qubit. Also the interaction
// decomposition chi' = eta (chi + eps chi_perp), the trace left by a particle.
//
// Wavefunction convention for a Gaussian pointer with mean position q0, mean
// momentum p0 and width dQ (standard deviation of |chi|^2, hbar = 1):
//
//   chi(q) ~ e^{i p0 q} e^{-(q - q0)^2 / (4 dQ^2)},   dP = 1/(2 dQ).
//
// For the beam modes dQ = w0/2, which makes the Rayleigh-range identities of
// the conjugate-variable shift relations exact.

#pragma once

#include <Eigen/Dense>
#include <optional>

#include "wvlab/core.hpp"
#include "wvlab/fft.hpp"
#include "wvlab/qstate.hpp"

namespace wvlab::pointer {

using qstate::Ket;

enum class Observable { Q, P, SigmaX, SigmaY, SigmaZ, Theta, Upsilon };

// ---------------------------------------------------------------------------
// Analytic Gaussian pointer.

struct GaussianPointer {
  double mean_q = 0.0;
  double mean_p = 0.0;
  double width = 1.0;  // dQ > 0

  GaussianPointer() = default;
  GaussianPointer(double q0, double p0, double dq) : mean_q(q0), mean_p(p0), width(dq) {
    if (!(width > 0.0)) throw std::invalid_argument("GaussianPointer: width must be > 0");
  }

  double momentum_width() const { return 0.5 / width; }
};

inline GaussianPointer apply_shift(const GaussianPointer& p, double dq, double dp) {
  return GaussianPointer(p.mean_q + dq, p.mean_p + dp, p.width);
}

// <a|b> for equal-width Gaussians:
//   |<a|b>| = e^{-(dq^2 + 4 dQ^4 dp^2) / (8 dQ^2)},
//   arg     = dp_rel * (q_a + q_b)/2,
// matching the grid construction e^{i p q} e^{-(q-q0)^2/4 dQ^2} exactly.
// The cross phase only appears for simultaneous position and momentum
// shifts; the grid oracle is the authority for that case.
inline cx gaussian_overlap(const GaussianPointer& a, const GaussianPointer& b) {
  if (std::abs(a.width - b.width) > tol::kAlgebraic * std::max(a.width, b.width)) {
    throw std::invalid_argument("gaussian_overlap: width mismatch is outside the model");
  }
  const double dq = b.mean_q - a.mean_q;
  const double dp = b.mean_p - a.mean_p;
  const double s2 = a.width * a.width;
  const double mag = std::exp(-(dq * dq + 4.0 * s2 * s2 * dp * dp) / (8.0 * s2));
  const double phase = dp * 0.5 * (a.mean_q + b.mean_q);
  return std::polar(mag, phase);
}

// ---------------------------------------------------------------------------
// Grid pointer (brute-force oracle).

struct GridAxis {
  double q_min = 0.0;
  double dq = 0.0;
  int n = 0;

  GridAxis() = default;
  GridAxis(double qmin, double step, int count) : q_min(qmin), dq(step), n(count) {
    if (!is_power_of_two(static_cast<std::size_t>(n))) {
      throw std::invalid_argument("GridAxis: n must be a power of two");
    }
  }

  double q(int i) const { return q_min + dq * i; }
  double q_max() const { return q(n - 1); }
  // Momentum sample for FFT bin k, fftshift-style ordering.
  double p(int k) const {
    const int kk = (k < n / 2) ? k : k - n;
    return kTwoPi * kk / (dq * n);
  }
  bool same_as(const GridAxis& o) const {
    return n == o.n && std::abs(q_min - o.q_min) < 1e-12 * std::max(1.0, std::abs(q_min)) &&
           std::abs(dq - o.dq) < 1e-15 * std::max(1.0, dq);
  }
};

struct GridPointer {
  GridAxis axis;
  Eigen::VectorXcd amps;  // quadrature normalized: sum |a_i|^2 dq = 1

  double quadrature_norm_sq() const { return amps.squaredNorm() * axis.dq; }

  // Discrete-normalized ket (amplitudes scaled by sqrt(dq)) so the grid can
  // enter composite states under the ordinary l2 convention.
  Ket to_ket() const {
    return Ket({axis.n}, amps * std::sqrt(axis.dq));
  }
};

// Sample a Gaussian pointer on a given axis and renormalize by quadrature.
// The boundary guard rejects grids whose edges carry weight (wrap-around).
inline GridPointer sample_gaussian(const GridAxis& axis, const GaussianPointer& p) {
  Eigen::VectorXcd a(axis.n);
  const double s2 = p.width * p.width;
  for (int i = 0; i < axis.n; ++i) {
    const double q = axis.q(i);
    const double env = std::exp(-square(q - p.mean_q) / (4.0 * s2));
    a[i] = std::polar(env, p.mean_p * q);
  }
  const double nrm = std::sqrt(a.squaredNorm() * axis.dq);
  if (!(nrm > 0.0)) throw grid_wraparound_error("sample_gaussian: state not representable");
  a /= nrm;
  if (std::max(std::abs(a[0]), std::abs(a[axis.n - 1])) > 1e-12) {
    throw grid_wraparound_error("sample_gaussian: boundary amplitude above 1e-12");
  }
  return GridPointer{axis, std::move(a)};
}

// Spec'd oracle constructor: symmetric grid [-extent, extent].
inline GridPointer grid_from_gaussian(const GaussianPointer& p, int n, double extent) {
  if (extent < 8.0 * p.width + std::abs(p.mean_q)) {
    throw grid_wraparound_error("grid_from_gaussian: extent < 8*width + |mean_q|");
  }
  const double dq = 2.0 * extent / n;
  return sample_gaussian(GridAxis(-extent, dq, n), p);
}

inline cx grid_overlap(const GridPointer& a, const GridPointer& b) {
  if (!a.axis.same_as(b.axis)) {
    throw std::invalid_argument("grid_overlap: pointers live on different grids");
  }
  return a.amps.dot(b.amps) * a.axis.dq;
}

// <Q>, <Q^2> of grid axis `axis` inside a composite ket.
inline std::pair<double, double> grid_position_moments(const Ket& s, int axis,
                                                       const GridAxis& g) {
  Eigen::VectorXd w(g.n), w2(g.n);
  for (int i = 0; i < g.n; ++i) {
    w[i] = g.q(i);
    w2[i] = square(g.q(i));
  }
  return {qstate::axis_expectation_diag(s, axis, w),
          qstate::axis_expectation_diag(s, axis, w2)};
}

// <P>, <P^2> of grid axis `axis` inside a composite ket, via FFT along that
// axis. Only |spectrum|^2 enters, so the q_min phase convention drops out.
inline std::pair<double, double> grid_momentum_moments(const Ket& s, int axis,
                                                       const GridAxis& g) {
  const int d = s.dims.at(axis);
  if (d != g.n) throw std::invalid_argument("grid_momentum_moments: axis/grid mismatch");
  long long inner_sz = 1, outer_sz = 1;
  for (int k = axis + 1; k < s.subsystems(); ++k) inner_sz *= s.dims[k];
  for (int k = 0; k < axis; ++k) outer_sz *= s.dims[k];

  Eigen::VectorXd power = Eigen::VectorXd::Zero(d);
  std::vector<cx> col(static_cast<std::size_t>(d));
  for (long long o = 0; o < outer_sz; ++o) {
    for (long long in = 0; in < inner_sz; ++in) {
      const long long base = o * d * inner_sz + in;
      for (int i = 0; i < d; ++i) col[static_cast<std::size_t>(i)] = s.amps[base + i * inner_sz];
      fft_radix2(col);
      for (int k = 0; k < d; ++k) power[k] += std::norm(col[static_cast<std::size_t>(k)]);
    }
  }
  const double total = power.sum();
  double m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < d; ++k) {
    const double p = g.p(k);
    m1 += p * power[k];
    m2 += p * p * power[k];
  }
  return {m1 / total, m2 / total};
}

// <chi_bra| O |chi_ket> on a single grid for O in {Q, P}.
inline cx grid_matrix_element(const GridPointer& bra, const GridPointer& ket, Observable o) {
  if (!bra.axis.same_as(ket.axis)) {
    throw std::invalid_argument("grid_matrix_element: grid mismatch");
  }
  const GridAxis& g = bra.axis;
  if (o == Observable::Q) {
    cx acc(0.0, 0.0);
    for (int i = 0; i < g.n; ++i) acc += std::conj(bra.amps[i]) * g.q(i) * ket.amps[i];
    return acc * g.dq;
  }
  if (o == Observable::P) {
    std::vector<cx> fb(bra.amps.data(), bra.amps.data() + g.n);
    std::vector<cx> fk(ket.amps.data(), ket.amps.data() + g.n);
    fft_radix2(fb);
    fft_radix2(fk);
    // The common q_min phase cancels between conj(bra) and ket.
    cx acc(0.0, 0.0);
    for (int k = 0; k < g.n; ++k) acc += std::conj(fb[static_cast<std::size_t>(k)]) *
                                         g.p(k) * fk[static_cast<std::size_t>(k)];
    return acc * g.dq / static_cast<double>(g.n);
  }
  throw std::invalid_argument("grid_matrix_element: observable not defined on grids");
}

// ---------------------------------------------------------------------------
// Polarization pointer.

struct TwoLevelPointer {
  cx amp_h{1.0, 0.0};
  cx amp_v{0.0, 0.0};

  Ket to_ket() const {
    Eigen::VectorXcd a(2);
    a << amp_h, amp_v;
    return Ket({2}, std::move(a));
  }
};

// |H> rotated by delta_theta in the sigma_x - sigma_z plane.
inline TwoLevelPointer polarization_rotated(double delta_theta) {
  return TwoLevelPointer{cx(std::cos(0.5 * delta_theta), 0.0),
                         cx(std::sin(0.5 * delta_theta), 0.0)};
}

inline Eigen::Matrix2cd pauli(Observable o) {
  Eigen::Matrix2cd m;
  switch (o) {
    case Observable::SigmaX:
      m << 0, 1, 1, 0;
      return m;
    case Observable::SigmaY:
      m << 0, cx(0, -1), cx(0, 1), 0;
      return m;
    case Observable::SigmaZ:
      m << 1, 0, 0, -1;
      return m;
    default:
      throw std::invalid_argument("pauli: not a Pauli observable");
  }
}

// ---------------------------------------------------------------------------
// Expectation values.

inline double expectation(const GaussianPointer& p, Observable o) {
  switch (o) {
    case Observable::Q:
      return p.mean_q;
    case Observable::P:
      return p.mean_p;
    default:
      throw std::invalid_argument("expectation: observable undefined for a Gaussian pointer");
  }
}

inline double expectation(const GridPointer& p, Observable o) {
  const Ket k = p.to_ket();
  switch (o) {
    case Observable::Q:
      return grid_position_moments(k, 0, p.axis).first;
    case Observable::P:
      return grid_momentum_moments(k, 0, p.axis).first;
    default:
      throw std::invalid_argument("expectation: observable undefined for a grid pointer");
  }
}

// Theta = arcsin<sigma_x>; Upsilon = -arcsin<sigma_y>. The Upsilon sign is
// fixed so the postselected shift obeys d<Upsilon> = -d<Theta> Im[(P_A)_w].
inline double expectation(const TwoLevelPointer& p, Observable o) {
  const Ket k = p.to_ket();
  auto pexp = [&](Observable ob) {
    return qstate::axis_expectation_matrix(k, 0, pauli(ob)).real();
  };
  switch (o) {
    case Observable::SigmaX:
    case Observable::SigmaY:
    case Observable::SigmaZ:
      return pexp(o);
    case Observable::Theta:
      return std::asin(std::clamp(pexp(Observable::SigmaX), -1.0, 1.0));
    case Observable::Upsilon:
      return -std::asin(std::clamp(pexp(Observable::SigmaY), -1.0, 1.0));
    default:
      throw std::invalid_argument("expectation: observable undefined for a two-level pointer");
  }
}

// ---------------------------------------------------------------------------
// Trace decomposition chi' = eta (chi + eps chi_perp).

struct TraceDecomposition {
  double eta = 1.0;        // |<chi|chi'>|, in (0, 1]
  double epsilon = 0.0;    // >= 0; the phase is absorbed into chi_perp
  Ket chi_perp;            // normalized, orthogonal to chi (zero ket if eps ~ 0)
  double absorbed_phase = 0.0;  // arg<chi|chi'>, kept for oracle comparisons
};

// Decompose a (normalized) interacted state against the initial one. The
// global phase of chi' is absorbed so eta is real positive, per the
// convention of the composite-state formulas.
inline TraceDecomposition orthogonal_decompose(const Ket& chi, const Ket& chi_prime) {
  const cx g = qstate::inner(chi, chi_prime);
  const double eta = std::abs(g);
  if (eta < tol::kDecomposeOverlap) {
    throw decomposition_undefined_error("orthogonal_decompose: states are orthogonal");
  }
  const double theta = std::arg(g);
  Eigen::VectorXcd r = chi_prime.amps - g * chi.amps;
  const double rn = r.norm();
  TraceDecomposition d;
  d.eta = eta;
  d.absorbed_phase = theta;
  d.epsilon = rn / eta;
  if (rn > 0.0) {
    d.chi_perp = Ket(chi.dims, (std::polar(1.0, -theta) / rn) * r);
  } else {
    d.chi_perp = Ket(chi.dims, Eigen::VectorXcd::Zero(chi.dim()));
  }
  return d;
}

}  // namespace wvlab::pointer
