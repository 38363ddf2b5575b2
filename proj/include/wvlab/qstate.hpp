// qstate.hpp
// Exact finite-dimensional state machinery: kets over a list of subsystems,
// density matrices, tensor products, projections and partial traces. Basis
// convention: subsystem 0 is the slowest index (path first, pointers in
// declared order), so tensor(a, b) is the plain Kronecker product.

#pragma once

#include <Eigen/Dense>
#include <numeric>
#include <vector>

#include "wvlab/core.hpp"

namespace wvlab::qstate {

inline long long product_of(const std::vector<int>& dims) {
  long long p = 1;
  for (int d : dims) p *= d;
  return p;
}

struct Ket {
  std::vector<int> dims;
  Eigen::VectorXcd amps;

  Ket() = default;
  Ket(std::vector<int> d, Eigen::VectorXcd a) : dims(std::move(d)), amps(std::move(a)) {
    if (amps.size() != product_of(dims)) {
      throw std::invalid_argument("Ket: amplitude count does not match dims");
    }
  }

  static Ket basis(int dim, int index) {
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(dim);
    a[index] = cx(1.0, 0.0);
    return Ket({dim}, std::move(a));
  }

  long long dim() const { return amps.size(); }
  int subsystems() const { return static_cast<int>(dims.size()); }

  double norm_sq() const { return amps.squaredNorm(); }
  double norm() const { return amps.norm(); }

  Ket& normalize() {
    const double n = norm();
    if (n <= 0.0) throw std::invalid_argument("Ket::normalize: zero state");
    amps /= n;
    return *this;
  }

  Ket normalized() const {
    Ket k = *this;
    k.normalize();
    return k;
  }
};

inline cx inner(const Ket& a, const Ket& b) { return a.amps.dot(b.amps); }

inline Ket tensor(const Ket& a, const Ket& b) {
  std::vector<int> dims = a.dims;
  dims.insert(dims.end(), b.dims.begin(), b.dims.end());
  Eigen::VectorXcd out(a.dim() * b.dim());
  for (long long i = 0; i < a.dim(); ++i) {
    out.segment(i * b.dim(), b.dim()) = a.amps[i] * b.amps;
  }
  return Ket(std::move(dims), std::move(out));
}

// stride[k] = product of dims after k; flat index = sum_k i_k * stride[k].
inline std::vector<long long> strides_of(const std::vector<int>& dims) {
  std::vector<long long> s(dims.size(), 1);
  for (int k = static_cast<int>(dims.size()) - 2; k >= 0; --k) {
    s[k] = s[k + 1] * dims[k + 1];
  }
  return s;
}

// Contract subsystem `axis` with the bra of `vec` (no normalization, no
// probability bookkeeping). Result spans the remaining subsystems.
inline Ket contract_axis(const Ket& s, int axis, const Eigen::VectorXcd& vec) {
  const int d = s.dims.at(axis);
  if (vec.size() != d) {
    throw std::invalid_argument("contract_axis: dimension mismatch");
  }
  long long inner_sz = 1, outer_sz = 1;
  for (int k = axis + 1; k < s.subsystems(); ++k) inner_sz *= s.dims[k];
  for (int k = 0; k < axis; ++k) outer_sz *= s.dims[k];

  std::vector<int> rdims;
  for (int k = 0; k < s.subsystems(); ++k) {
    if (k != axis) rdims.push_back(s.dims[k]);
  }
  if (rdims.empty()) rdims.push_back(1);

  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(outer_sz * inner_sz);
  for (long long o = 0; o < outer_sz; ++o) {
    const long long src = o * d * inner_sz;
    const long long dst = o * inner_sz;
    for (int i = 0; i < d; ++i) {
      out.segment(dst, inner_sz) +=
          std::conj(vec[i]) * s.amps.segment(src + i * inner_sz, inner_sz);
    }
  }
  return Ket(std::move(rdims), std::move(out));
}

struct Projection {
  Ket state;           // unnormalized conditional state of the rest
  double probability;  // squared norm of the conditional state
};

// Project subsystem `axis` onto the (normalized) single-subsystem ket `onto`.
// Throws postselection_impossible_error when the outcome probability is
// numerically zero (orthogonal boundary conditions).
inline Projection project(const Ket& s, int axis, const Ket& onto) {
  Ket cond = contract_axis(s, axis, onto.amps);
  const double p = cond.norm_sq();
  if (p < tol::kPostselectProb) {
    throw postselection_impossible_error("project: postselection impossible (probability ~ 0)");
  }
  return Projection{std::move(cond), p};
}

// <diag(w) on `axis`> for the normalized state s.
inline double axis_expectation_diag(const Ket& s, int axis, const Eigen::VectorXd& w) {
  const int d = s.dims.at(axis);
  if (w.size() != d) throw std::invalid_argument("axis_expectation_diag: size mismatch");
  long long inner_sz = 1, outer_sz = 1;
  for (int k = axis + 1; k < s.subsystems(); ++k) inner_sz *= s.dims[k];
  for (int k = 0; k < axis; ++k) outer_sz *= s.dims[k];
  double acc = 0.0;
  for (long long o = 0; o < outer_sz; ++o) {
    for (int i = 0; i < d; ++i) {
      const long long base = (o * d + i) * inner_sz;
      acc += w[i] * s.amps.segment(base, inner_sz).squaredNorm();
    }
  }
  return acc / s.norm_sq();
}

// <M on `axis`> for a small dense observable M acting on one subsystem.
inline cx axis_expectation_matrix(const Ket& s, int axis, const Eigen::MatrixXcd& m) {
  const int d = s.dims.at(axis);
  if (m.rows() != d || m.cols() != d) {
    throw std::invalid_argument("axis_expectation_matrix: size mismatch");
  }
  long long inner_sz = 1, outer_sz = 1;
  for (int k = axis + 1; k < s.subsystems(); ++k) inner_sz *= s.dims[k];
  for (int k = 0; k < axis; ++k) outer_sz *= s.dims[k];
  cx acc(0.0, 0.0);
  for (long long o = 0; o < outer_sz; ++o) {
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        if (m(a, b) == cx(0.0, 0.0)) continue;
        const long long ia = (o * d + a) * inner_sz;
        const long long ib = (o * d + b) * inner_sz;
        acc += m(a, b) * s.amps.segment(ia, inner_sz)
                             .dot(s.amps.segment(ib, inner_sz));
      }
    }
  }
  return acc / s.norm_sq();
}

struct DensityMatrix {
  std::vector<int> dims;
  Eigen::MatrixXcd mat;

  DensityMatrix() = default;
  DensityMatrix(std::vector<int> d, Eigen::MatrixXcd m) : dims(std::move(d)), mat(std::move(m)) {
    if (mat.rows() != mat.cols() || mat.rows() != product_of(dims)) {
      throw std::invalid_argument("DensityMatrix: shape does not match dims");
    }
  }

  static DensityMatrix from_ket(const Ket& k) {
    Eigen::VectorXcd a = k.amps / k.norm();
    return DensityMatrix(k.dims, a * a.adjoint());
  }

  long long dim() const { return mat.rows(); }
  double trace_real() const { return mat.trace().real(); }

  // Hermitian within kAlgebraic, unit trace, eigenvalues above kPsdFloor.
  void validate() const {
    const double herm = (mat - mat.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol::kAlgebraic) {
      throw error("DensityMatrix: not Hermitian (dev " + std::to_string(herm) + ")");
    }
    if (std::abs(mat.trace().real() - 1.0) > tol::kAlgebraic ||
        std::abs(mat.trace().imag()) > tol::kAlgebraic) {
      throw error("DensityMatrix: trace != 1");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(mat, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < tol::kPsdFloor) {
      throw error("DensityMatrix: negative eigenvalue beyond PSD floor");
    }
  }
};

// Gather the state into a (rest x keep) matrix so the reduced density matrix
// of the kept subsystems is a single adjoint product. Kept subsystems stay in
// their original relative order.
inline Eigen::MatrixXcd gather_keep_matrix(const Ket& s, const std::vector<int>& keep) {
  const auto strides = strides_of(s.dims);
  std::vector<int> rest;
  for (int k = 0; k < s.subsystems(); ++k) {
    if (std::find(keep.begin(), keep.end(), k) == keep.end()) rest.push_back(k);
  }
  long long keep_dim = 1, rest_dim = 1;
  for (int k : keep) keep_dim *= s.dims[k];
  for (int k : rest) rest_dim *= s.dims[k];

  Eigen::MatrixXcd m(rest_dim, keep_dim);
  std::vector<int> kidx(keep.size(), 0), ridx(rest.size(), 0);
  for (long long r = 0; r < rest_dim; ++r) {
    long long rbase = 0;
    {
      long long tmp = r;
      for (int k = static_cast<int>(rest.size()) - 1; k >= 0; --k) {
        const int d = s.dims[rest[k]];
        rbase += (tmp % d) * strides[rest[k]];
        tmp /= d;
      }
    }
    for (long long c = 0; c < keep_dim; ++c) {
      long long idx = rbase;
      long long tmp = c;
      for (int k = static_cast<int>(keep.size()) - 1; k >= 0; --k) {
        const int d = s.dims[keep[k]];
        idx += (tmp % d) * strides[keep[k]];
        tmp /= d;
      }
      m(r, c) = s.amps[idx];
    }
  }
  return m;
}

// Reduced density matrix of `keep` directly from a pure state (never forms
// the full |psi><psi|). Input need not be normalized; the result has unit
// trace.
inline DensityMatrix reduced_density(const Ket& s, const std::vector<int>& keep) {
  const Eigen::MatrixXcd m = gather_keep_matrix(s, keep);
  Eigen::MatrixXcd rho = m.transpose() * m.conjugate();
  rho /= rho.trace().real();
  std::vector<int> rdims;
  for (int k : keep) rdims.push_back(s.dims[k]);
  return DensityMatrix(std::move(rdims), std::move(rho));
}

// Partial trace over everything not in `keep`. Trace preserving.
inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
  const auto strides = strides_of(rho.dims);
  std::vector<int> rest;
  for (int k = 0; k < static_cast<int>(rho.dims.size()); ++k) {
    if (std::find(keep.begin(), keep.end(), k) == keep.end()) rest.push_back(k);
  }
  long long keep_dim = 1, rest_dim = 1;
  for (int k : keep) keep_dim *= rho.dims[k];
  for (int k : rest) rest_dim *= rho.dims[k];

  auto flat = [&](long long kc, long long rc) {
    long long idx = 0;
    long long tmp = kc;
    for (int k = static_cast<int>(keep.size()) - 1; k >= 0; --k) {
      const int d = rho.dims[keep[k]];
      idx += (tmp % d) * strides[keep[k]];
      tmp /= d;
    }
    tmp = rc;
    for (int k = static_cast<int>(rest.size()) - 1; k >= 0; --k) {
      const int d = rho.dims[rest[k]];
      idx += (tmp % d) * strides[rest[k]];
      tmp /= d;
    }
    return idx;
  };

  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(keep_dim, keep_dim);
  for (long long a = 0; a < keep_dim; ++a) {
    for (long long b = 0; b < keep_dim; ++b) {
      cx acc(0.0, 0.0);
      for (long long r = 0; r < rest_dim; ++r) {
        acc += rho.mat(flat(a, r), flat(b, r));
      }
      out(a, b) = acc;
    }
  }
  std::vector<int> rdims;
  for (int k : keep) rdims.push_back(rho.dims[k]);
  return DensityMatrix(std::move(rdims), std::move(out));
}

}  // namespace wvlab::qstate
