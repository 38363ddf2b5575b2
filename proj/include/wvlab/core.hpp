// core.hpp
// Shared numeric conventions for the weak-value laboratory: complex alias,
// centralized tolerances, typed error conditions, a counter-based normal
// generator, and a small thread pool helper.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace wvlab {

using cx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi_v<double>;
inline constexpr double kTwoPi = 2.0 * kPi;

// One knob per class of check. Algebraic identities (normalization,
// hermiticity, reconstruction) use kAlgebraic; eigenvalue positivity allows
// kPsdFloor of slack; the remaining constants guard denominators.
namespace tol {
inline constexpr double kAlgebraic = 1e-12;
inline constexpr double kPsdFloor = -1e-10;
inline constexpr double kPoleDenominator = 1e-14;
inline constexpr double kOverlapTrace = 1e-14;
inline constexpr double kPostselectProb = 1e-15;
inline constexpr double kDecomposeOverlap = 1e-12;
inline constexpr double kConditionMax = 1e8;
}  // namespace tol

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pre- and postselection are (numerically) orthogonal: the weak-value
// denominator vanishes and no finite value exists.
class orthogonal_boundary_error : public error {
 public:
  using error::error;
};

// Dark-fringe condition: the conditional state has vanishing norm.
class postselection_impossible_error : public error {
 public:
  using error::error;
};

// orthogonal_decompose needs a nonvanishing overlap to fix eta > 0.
class decomposition_undefined_error : public error {
 public:
  using error::error;
};

// Grid extent too small for the requested state; amplitudes would wrap.
class grid_wraparound_error : public error {
 public:
  using error::error;
};

// Composite state would exceed the desk-scale oracle budget.
class memory_guard_error : public error {
 public:
  using error::error;
};

// Fit design matrix is rank deficient or the data cannot separate the
// requested parameters.
class unidentifiable_error : public error {
 public:
  using error::error;
};

inline double square(double x) { return x * x; }

// Reduce an angle to [0, 2*pi).
inline double wrap_angle(double phi) {
  double r = std::fmod(phi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

// ---------------------------------------------------------------------------
// Counter-based randomness. Each draw is a pure function of (seed, counter,
// stream), so parallel generation is schedule independent and runs are
// reproducible bit for bit.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double uniform01(std::uint64_t seed, std::uint64_t counter,
                        std::uint64_t stream = 0) {
  std::uint64_t z = splitmix64(seed ^ splitmix64(counter ^ splitmix64(stream)));
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

// Box-Muller pair of standard normals for sample `counter`.
inline std::pair<double, double> normal_pair(std::uint64_t seed,
                                             std::uint64_t counter,
                                             std::uint64_t stream = 0) {
  double u1 = uniform01(seed, counter, stream * 2 + 1);
  double u2 = uniform01(seed, counter, stream * 2 + 2);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
}

// ---------------------------------------------------------------------------
// Parallel map over [0, n). WVLAB_THREADS caps the worker count. Callers
// write results to preallocated slots indexed by the loop variable, so the
// output never depends on the schedule.

inline int max_threads() {
  if (const char* env = std::getenv("WVLAB_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, int thread_cap = 0) {
  int workers = max_threads();
  if (thread_cap > 0) workers = std::min(workers, thread_cap);
  workers = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr first_error;
  std::mutex guard;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n;
             i += static_cast<std::size_t>(workers)) {
          fn(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace wvlab
