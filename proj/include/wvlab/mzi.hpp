// mzi.hpp
// End-to-end Mach-Zehnder simulation. compose/postselect build the exact
// composite state of path x pointers and condition on the output port; the
// prediction side maps every weak coupling through the weak value of the
// projection on arm A. For Gaussian pointers the first-moment predictions
// are exact at any coupling strength, which the grid oracle checks.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wvlab/core.hpp"
#include "wvlab/pointer.hpp"
#include "wvlab/qstate.hpp"
#include "wvlab/weakvalue.hpp"

namespace wvlab::mzi {

using pointer::GaussianPointer;
using pointer::GridAxis;
using pointer::GridPointer;
using pointer::Observable;
using pointer::TraceDecomposition;
using qstate::Ket;
using weakvalue::PreSelection;

// Output-port postselection behind the balanced second beam splitter.
// Port C is (|A> + |B>)/sqrt(2), port D the minus combination.
struct PostSelection {
  enum class Port { C, D };
  Port port = Port::C;

  Ket ket() const {
    Eigen::VectorXcd a(2);
    const double s = 1.0 / std::sqrt(2.0);
    a << cx(s, 0.0), cx(port == Port::C ? s : -s, 0.0);
    return Ket({2}, std::move(a));
  }
};

enum class PointerKind { gaussian_q, gaussian_p, two_level, custom_ket };

// One coupling channel in arm A: a pointer plus the shift the particle
// imprints on it. Gaussian pointers may carry simultaneous position and
// momentum shifts (that is what a combined translation/tilt misalignment
// produces on one beam axis).
struct CouplingSpec {
  PointerKind kind = PointerKind::gaussian_q;
  std::string label;
  double delta_q = 0.0;     // position shift, length units
  double delta_p = 0.0;     // momentum shift, inverse length units
  double width = 1.0;       // Gaussian dQ
  double delta_theta = 0.0; // polarization rotation, radians
  int grid_n = 4096;        // oracle resolution (power of two)
  Ket custom_chi, custom_chi_prime;

  static CouplingSpec gaussian_position(std::string label, double dq, double width,
                                        int grid_n = 4096) {
    CouplingSpec c;
    c.kind = PointerKind::gaussian_q;
    c.label = std::move(label);
    c.delta_q = dq;
    c.width = width;
    c.grid_n = grid_n;
    return c;
  }
  static CouplingSpec gaussian_momentum(std::string label, double dp, double width,
                                        int grid_n = 4096) {
    CouplingSpec c;
    c.kind = PointerKind::gaussian_p;
    c.label = std::move(label);
    c.delta_p = dp;
    c.width = width;
    c.grid_n = grid_n;
    return c;
  }
  static CouplingSpec gaussian_combined(std::string label, double dq, double dp,
                                        double width, int grid_n = 4096) {
    CouplingSpec c;
    c.kind = PointerKind::gaussian_q;
    c.label = std::move(label);
    c.delta_q = dq;
    c.delta_p = dp;
    c.width = width;
    c.grid_n = grid_n;
    return c;
  }
  static CouplingSpec polarization(std::string label, double dtheta) {
    CouplingSpec c;
    c.kind = PointerKind::two_level;
    c.label = std::move(label);
    c.delta_theta = dtheta;
    return c;
  }
  static CouplingSpec custom(std::string label, Ket chi, Ket chi_prime) {
    CouplingSpec c;
    c.kind = PointerKind::custom_ket;
    c.label = std::move(label);
    c.custom_chi = std::move(chi);
    c.custom_chi_prime = std::move(chi_prime);
    return c;
  }

  bool is_gaussian() const {
    return kind == PointerKind::gaussian_q || kind == PointerKind::gaussian_p;
  }

  // |<chi|chi'>| of this channel alone, closed form.
  double eta() const {
    switch (kind) {
      case PointerKind::gaussian_q:
      case PointerKind::gaussian_p: {
        const double s2 = width * width;
        return std::exp(-(delta_q * delta_q + 4.0 * s2 * s2 * delta_p * delta_p) /
                        (8.0 * s2));
      }
      case PointerKind::two_level:
        return std::cos(0.5 * delta_theta);
      case PointerKind::custom_ket:
        return std::abs(qstate::inner(custom_chi, custom_chi_prime));
    }
    return 1.0;
  }

  // Orthogonal-component amplitude, eta^2 (1 + eps^2) = 1.
  double epsilon() const {
    const double e = eta();
    return std::sqrt(std::max(0.0, 1.0 / (e * e) - 1.0));
  }
};

struct ExperimentModel {
  PreSelection pre;
  std::vector<CouplingSpec> couplings;
  // Unmodeled imperfections |chi_O> enter only through their overlap; they
  // are carried as a scalar factor on the interarm coherence.
  double eta_imperfection = 1.0;
  PostSelection post;
};

inline double eta_total(const ExperimentModel& m) {
  double e = m.eta_imperfection;
  for (const auto& c : m.couplings) e *= c.eta();
  return e;
}

// ---------------------------------------------------------------------------
// Exact composition and postselection (the oracle route).

struct ComposedFactor {
  std::string label;
  PointerKind kind;
  std::optional<GridAxis> axis;  // present for grid-backed factors
  Ket chi;         // initial pointer state (discrete normalized)
  Ket chi_prime;   // interacted state, global phase absorbed
  TraceDecomposition decomp;
};

struct ComposedExperiment {
  Ket state;  // dims: [2 path, factors..., (2 imperfection ancilla)]
  std::vector<ComposedFactor> factors;
  bool has_imperfection_ancilla = false;
  PreSelection pre;
  PostSelection post;

  int axis_of(const std::string& label) const {
    for (std::size_t j = 0; j < factors.size(); ++j) {
      if (factors[j].label == label) return static_cast<int>(j);
    }
    throw std::invalid_argument("ComposedExperiment: no factor labeled '" + label + "'");
  }
};

namespace detail {

// Build (chi, chi') for one coupling, absorbing the overlap phase so that
// <chi|chi'> is real positive in the representation actually used. This is
// the phase convention of the product decomposition; it keeps the plain
// interferometer phase phi in all downstream formulas.
inline ComposedFactor make_factor(const CouplingSpec& c) {
  ComposedFactor f;
  f.label = c.label;
  f.kind = c.kind;
  switch (c.kind) {
    case PointerKind::gaussian_q:
    case PointerKind::gaussian_p: {
      const double half = 12.0 * c.width + 0.5 * std::abs(c.delta_q);
      const GridAxis axis(0.5 * c.delta_q - half, 2.0 * half / c.grid_n, c.grid_n);
      const GridPointer chi = pointer::sample_gaussian(axis, GaussianPointer(0.0, 0.0, c.width));
      GridPointer chip =
          pointer::sample_gaussian(axis, GaussianPointer(c.delta_q, c.delta_p, c.width));
      const cx g = pointer::grid_overlap(chi, chip);
      if (std::abs(g) > 0.0) chip.amps *= std::conj(g) / std::abs(g);
      f.axis = axis;
      f.chi = chi.to_ket();
      f.chi_prime = chip.to_ket();
      break;
    }
    case PointerKind::two_level: {
      f.chi = pointer::TwoLevelPointer{}.to_ket();
      f.chi_prime = pointer::polarization_rotated(c.delta_theta).to_ket();
      break;
    }
    case PointerKind::custom_ket: {
      f.chi = c.custom_chi.normalized();
      Ket chip = c.custom_chi_prime.normalized();
      const cx g = qstate::inner(f.chi, chip);
      if (std::abs(g) > 0.0) chip.amps *= std::conj(g) / std::abs(g);
      f.chi_prime = std::move(chip);
      break;
    }
  }
  f.decomp = pointer::orthogonal_decompose(f.chi, f.chi_prime);
  return f;
}

}  // namespace detail

// cos(a)|A>(x)chi'_1..chi'_m + sin(a)e^{i phi}|B>(x)chi_1..chi_m, normalized.
// An eta_imperfection < 1 is materialized as a trailing two-level ancilla
// whose overlap equals eta_O, which reproduces the same path density matrix.
inline ComposedExperiment compose(const ExperimentModel& m) {
  int grids = 0;
  long long dim = 2;
  for (const auto& c : m.couplings) {
    if (c.is_gaussian()) {
      ++grids;
      dim *= c.grid_n;
    } else if (c.kind == PointerKind::two_level) {
      dim *= 2;
    } else {
      dim *= c.custom_chi.dim();
    }
  }
  if (m.eta_imperfection < 1.0) dim *= 2;
  if (grids > 2) {
    throw memory_guard_error("compose: at most 2 grid pointers are supported");
  }
  if (dim > (1LL << 27)) {
    throw memory_guard_error("compose: composite dimension exceeds the oracle budget");
  }

  ComposedExperiment ce;
  ce.pre = m.pre;
  ce.post = m.post;
  Ket branch_a({1}, Eigen::VectorXcd::Ones(1));
  Ket branch_b = branch_a;
  for (const auto& c : m.couplings) {
    ComposedFactor f = detail::make_factor(c);
    branch_a = qstate::tensor(branch_a, f.chi_prime);
    branch_b = qstate::tensor(branch_b, f.chi);
    ce.factors.push_back(std::move(f));
  }
  if (m.eta_imperfection < 1.0) {
    const double eo = m.eta_imperfection;
    if (!(eo > 0.0)) throw std::invalid_argument("compose: eta_imperfection must be in (0, 1]");
    Eigen::VectorXcd chio(2), chi(2);
    chio << cx(eo, 0.0), cx(std::sqrt(1.0 - eo * eo), 0.0);
    chi << cx(1.0, 0.0), cx(0.0, 0.0);
    branch_a = qstate::tensor(branch_a, Ket({2}, chio));
    branch_b = qstate::tensor(branch_b, Ket({2}, chi));
    ce.has_imperfection_ancilla = true;
  }

  std::vector<int> dims{2};
  dims.insert(dims.end(), branch_a.dims.begin() + 1, branch_a.dims.end());
  const long long rest = branch_a.dim();
  Eigen::VectorXcd amps(2 * rest);
  amps.head(rest) = std::cos(m.pre.alpha) * branch_a.amps;
  amps.tail(rest) = std::polar(std::sin(m.pre.alpha), m.pre.phi) * branch_b.amps;
  ce.state = Ket(std::move(dims), std::move(amps));
  return ce;
}

inline Ket compose_state(const ExperimentModel& m) { return compose(m).state; }

struct PostselectedPointers {
  Ket state;           // unnormalized conditional state of all pointer factors
  double probability;  // postselection probability
  std::vector<ComposedFactor> factors;
  bool has_imperfection_ancilla = false;
};

inline PostselectedPointers postselect(const ComposedExperiment& ce) {
  qstate::Projection pr = qstate::project(ce.state, 0, ce.post.ket());
  return PostselectedPointers{std::move(pr.state), pr.probability, ce.factors,
                              ce.has_imperfection_ancilla};
}

inline PostselectedPointers postselect_pointer(const ExperimentModel& m) {
  return postselect(compose(m));
}

// Conditional expectation of an observable on one pointer after
// postselection (exact, any coupling strength).
inline double conditional_expectation(const PostselectedPointers& ps,
                                      const std::string& label, Observable o) {
  int axis = -1;
  for (std::size_t j = 0; j < ps.factors.size(); ++j) {
    if (ps.factors[j].label == label) axis = static_cast<int>(j);
  }
  if (axis < 0) throw std::invalid_argument("conditional_expectation: unknown label");
  const ComposedFactor& f = ps.factors[static_cast<std::size_t>(axis)];
  if (f.axis) {
    switch (o) {
      case Observable::Q:
        return pointer::grid_position_moments(ps.state, axis, *f.axis).first;
      case Observable::P:
        return pointer::grid_momentum_moments(ps.state, axis, *f.axis).first;
      default:
        throw std::invalid_argument("conditional_expectation: grid pointer has Q/P only");
    }
  }
  auto pexp = [&](Observable ob) {
    return qstate::axis_expectation_matrix(ps.state, axis, pointer::pauli(ob)).real();
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
      throw std::invalid_argument("conditional_expectation: observable/pointer mismatch");
  }
}

// Expectation on the interacted single-channel state chi' of one factor
// (what a blocked-arm-B measurement sees), same observable conventions.
inline double single_channel_expectation(const ComposedFactor& f, Observable o) {
  if (f.axis) {
    switch (o) {
      case Observable::Q:
        return pointer::grid_position_moments(f.chi_prime, 0, *f.axis).first;
      case Observable::P:
        return pointer::grid_momentum_moments(f.chi_prime, 0, *f.axis).first;
      default:
        throw std::invalid_argument("single_channel_expectation: grid pointer has Q/P only");
    }
  }
  auto pexp = [&](Observable ob) {
    return qstate::axis_expectation_matrix(f.chi_prime, 0, pointer::pauli(ob)).real();
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
      throw std::invalid_argument("single_channel_expectation: observable/pointer mismatch");
  }
}

// Exact reduced density matrix of one pointer after postselection, written
// in its {chi, chi_perp} basis. The conditional state of each factor lies in
// that two-dimensional subspace, so the 2x2 block is complete.
inline qstate::DensityMatrix reduced_pointer_dm(const PostselectedPointers& ps,
                                                const std::string& label) {
  int axis = -1;
  for (std::size_t j = 0; j < ps.factors.size(); ++j) {
    if (ps.factors[j].label == label) axis = static_cast<int>(j);
  }
  if (axis < 0) throw std::invalid_argument("reduced_pointer_dm: unknown label");
  const ComposedFactor& f = ps.factors[static_cast<std::size_t>(axis)];
  const Ket v0 = qstate::contract_axis(ps.state, axis, f.chi.amps);
  const Ket v1 = qstate::contract_axis(ps.state, axis, f.decomp.chi_perp.amps);
  Eigen::MatrixXcd rho(2, 2);
  rho(0, 0) = v0.amps.dot(v0.amps);
  rho(1, 1) = v1.amps.dot(v1.amps);
  rho(0, 1) = v1.amps.dot(v0.amps);  // <chi| rho |chi_perp>
  rho(1, 0) = std::conj(rho(0, 1));
  rho /= (rho(0, 0) + rho(1, 1)).real();
  return qstate::DensityMatrix({2}, std::move(rho));
}

// ---------------------------------------------------------------------------
// Predictions.

struct GaussianShift {
  double mean_q;
  double mean_p;
};

// Exact postselected first-moment shifts of a Gaussian pointer carrying a
// (delta_q, delta_p) displacement, valid at any coupling strength. The weak
// value must be evaluated with the total overlap of the experiment.
inline GaussianShift gaussian_shift_exact(double delta_q, double delta_p, double width,
                                          cx wv) {
  const double s2 = width * width;
  return GaussianShift{
      delta_q * wv.real() - 2.0 * delta_p * s2 * wv.imag(),
      delta_p * wv.real() + delta_q / (2.0 * s2) * wv.imag(),
  };
}

struct ShiftEntry {
  Observable observable;
  double single_channel;   // 2 eps Re<chi|O|chi_perp>
  double postselected;     // 2 eps Re[<chi|O|chi_perp> (P_A)_w]
  bool weakness_warning;   // eps > 0.1 on the target pointer
  Eigen::Matrix2cd predicted_dm;  // first-order conditional density matrix
};

namespace detail {

// <chi|O|chi_perp> in closed form for the supported pointer kinds. For the
// Gaussian this follows from <chi|Q|chi'> = <chi|chi'>(dq/2 + i dp dQ^2) and
// <chi|P|chi'> = <chi|chi'>(dp/2 - i dq dP^2) after the phase absorption.
inline cx weak_matrix_element(const CouplingSpec& c, Observable o) {
  const double eps = c.epsilon();
  if (eps <= 0.0) return cx(0.0, 0.0);
  if (c.is_gaussian()) {
    const double s2 = c.width * c.width;
    switch (o) {
      case Observable::Q:
        return cx(0.5 * c.delta_q, c.delta_p * s2) / eps;
      case Observable::P:
        return cx(0.5 * c.delta_p, -c.delta_q / (4.0 * s2)) / eps;
      default:
        throw std::invalid_argument("first_order_shift: Gaussian pointer has Q/P only");
    }
  }
  if (c.kind == PointerKind::two_level) {
    const double sgn = c.delta_theta >= 0.0 ? 1.0 : -1.0;  // chi_perp = sgn |V>
    switch (o) {
      case Observable::SigmaX:
      case Observable::Theta:
        return cx(sgn, 0.0);
      case Observable::SigmaY:
        return cx(0.0, -sgn);
      case Observable::Upsilon:
        return cx(0.0, sgn);  // Upsilon = -arcsin<sigma_y>
      case Observable::SigmaZ:
        return cx(0.0, 0.0);
      default:
        throw std::invalid_argument("first_order_shift: observable/pointer mismatch");
    }
  }
  throw std::invalid_argument("first_order_shift: custom pointers need an explicit operator");
}

}  // namespace detail

// Universal first-order prediction for the postselected shift of observable
// `o` on the pointer `label` (Gaussian pointers: exact in Q and P).
inline ShiftEntry first_order_shift(const ExperimentModel& m, const std::string& label,
                                    Observable o) {
  const CouplingSpec* target = nullptr;
  for (const auto& c : m.couplings) {
    if (c.label == label) target = &c;
  }
  if (target == nullptr) throw std::invalid_argument("first_order_shift: unknown label");
  const double eps = target->epsilon();
  const cx wv = weakvalue::wv_finite(m.pre, eta_total(m));
  const cx mel = detail::weak_matrix_element(*target, o);
  ShiftEntry e;
  e.observable = o;
  e.single_channel = 2.0 * eps * mel.real();
  e.postselected = 2.0 * eps * (mel * wv).real();
  e.weakness_warning = eps > 0.1;
  e.predicted_dm << cx(1.0, 0.0), std::conj(wv) * eps, wv * eps, cx(0.0, 0.0);
  return e;
}

// Explicit-operator variant for custom pointers: O given as a matrix in the
// pointer's own basis.
inline ShiftEntry first_order_shift(const ExperimentModel& m, const std::string& label,
                                    const Eigen::MatrixXcd& op) {
  const CouplingSpec* target = nullptr;
  for (const auto& c : m.couplings) {
    if (c.label == label) target = &c;
  }
  if (target == nullptr) throw std::invalid_argument("first_order_shift: unknown label");
  const ComposedFactor f = detail::make_factor(*target);
  const double eps = f.decomp.epsilon;
  const cx wv = weakvalue::wv_finite(m.pre, eta_total(m));
  const cx mel0 = f.chi.amps.dot(op * f.decomp.chi_perp.amps);
  ShiftEntry e;
  e.observable = Observable::Q;
  e.single_channel = 2.0 * eps * mel0.real();
  e.postselected = 2.0 * eps * (mel0 * wv).real();
  e.weakness_warning = eps > 0.1;
  e.predicted_dm << cx(1.0, 0.0), std::conj(wv) * eps, wv * eps, cx(0.0, 0.0);
  return e;
}

// One row of a phase scan: the weak value and the predicted postselected
// shifts of the six laboratory observables, in the units of the couplings.
struct ScanRow {
  double phi = 0.0;
  double intensity = 0.0;
  cx wv{0.0, 0.0};
  bool pole = false;
  double x = 0.0;        // position shift along x
  double theta_y = 0.0;  // conjugate beam angle, = <p_x>/k
  double theta_x = 0.0;  // beam angle around x, = <p_y>/k
  double y = 0.0;        // conjugate position along y
  double big_theta = 0.0;  // polarization angle in the sigma_x-sigma_z plane
  double upsilon = 0.0;    // conjugate polarization angle
};

// Predicted scan over phi for a model carrying up to one coupling of each
// standard kind (position x, beam angle via momentum, polarization). The
// Rayleigh range and wavenumber convert between angular and positional
// Gaussian-beam shifts; all six predictions collapse onto Re/Im of the weak
// value after that rescaling.
inline std::vector<ScanRow> predict_scan(const ExperimentModel& m, double z_rayleigh,
                                         double wavenumber,
                                         const std::vector<double>& phi_samples) {
  const CouplingSpec* cq = nullptr;
  const CouplingSpec* cp = nullptr;
  const CouplingSpec* ct = nullptr;
  for (const auto& c : m.couplings) {
    if (c.kind == PointerKind::gaussian_q && cq == nullptr) cq = &c;
    if (c.kind == PointerKind::gaussian_p && cp == nullptr) cp = &c;
    if (c.kind == PointerKind::two_level && ct == nullptr) ct = &c;
  }
  const double dx = cq ? cq->delta_q : 0.0;
  const double dtheta_x = cp ? cp->delta_p / wavenumber : 0.0;
  const double dtheta_pol = ct ? ct->delta_theta : 0.0;
  const double eta = eta_total(m);

  std::vector<ScanRow> rows(phi_samples.size());
  for (std::size_t i = 0; i < phi_samples.size(); ++i) {
    ScanRow& r = rows[i];
    r.phi = phi_samples[i];
    const PreSelection pre(m.pre.alpha, phi_samples[i]);
    r.intensity = weakvalue::intensity(pre, eta, phi_samples[i]);
    try {
      r.wv = weakvalue::wv_finite(pre, eta);
    } catch (const orthogonal_boundary_error&) {
      r.pole = true;
      continue;
    }
    const double re = r.wv.real(), im = r.wv.imag();
    r.x = dx * re;
    r.theta_y = dx / z_rayleigh * im;
    r.theta_x = dtheta_x * re;
    r.y = -z_rayleigh * dtheta_x * im;
    r.big_theta = dtheta_pol * re;
    r.upsilon = -dtheta_pol * im;
  }
  return rows;
}

}  // namespace wvlab::mzi
