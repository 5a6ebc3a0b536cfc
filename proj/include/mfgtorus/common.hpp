#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

using Vec = std::vector<double>;

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Picard iteration failed to contract (T too large, or coefficients too strong).
struct NoConvergenceError : SolverError {
    NoConvergenceError(std::string msg, std::vector<double> ratio_history)
        : SolverError(std::move(msg)), ratios(std::move(ratio_history)) {}
    std::vector<double> ratios;
};

// Newton inversion of the flow map failed (singular Jacobian or no convergence).
struct InversionError : SolverError {
    using SolverError::SolverError;
};

inline void check_finite(const Vec& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite component");
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec axpy(double alpha, const Vec& x, const Vec& y) {
    Vec r(y);
    for (std::size_t i = 0; i < x.size(); ++i) r[i] += alpha * x[i];
    return r;
}

inline Vec scaled(const Vec& x, double alpha) {
    Vec r(x);
    for (double& v : r) v *= alpha;
    return r;
}

// Sum that is invariant under permutation of the terms: terms are sorted
// before accumulation, so relabeling particles yields bitwise-identical
// coupling values.
double perm_invariant_sum(std::vector<double> terms);

// Deterministic uniform sampler on [0,1): MT19937-64 with the raw 64-bit
// output mapped to a double via the top 53 bits. Both the generator and the
// mapping are fully specified, so a seed reproduces the same stream on any
// platform.
class UniformSampler {
  public:
    explicit UniformSampler(std::uint64_t seed) : gen_(seed) {}
    double next() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace mfg
