#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfgtorus/transport.hpp"

namespace mfg {

using Mat = Eigen::MatrixXd;

// Allocation-free evaluator signatures for the solver's inner sweeps; the
// builtins provide them, generic user models may leave them empty (the
// vector-returning evaluators are then wrapped).
using RawHamiltonianGrad =
    std::function<void(const double* q, const double* p, std::size_t d, double* out)>;
using RawCouplingGrad =
    std::function<void(const double* q, const EmpiricalMeasure& mu, std::size_t d, double* out)>;
using RawCouplingValue =
    std::function<double(const double* q, const EmpiricalMeasure& mu, std::size_t d)>;

// Evaluators for H(q,p) and its first derivatives. Analytic gradients are
// optional; when absent, central finite differences of value with step
// fd_step are used.
struct HamiltonianModel {
    std::function<double(const Vec& q, const Vec& p)> value;
    std::function<Vec(const Vec& q, const Vec& p)> grad_q_fn;
    std::function<Vec(const Vec& q, const Vec& p)> grad_p_fn;
    RawHamiltonianGrad grad_q_raw, grad_p_raw;  // optional hot-path variants
    double fd_step = 1e-5;
    bool periodic_q = true;

    Vec grad_q(const Vec& q, const Vec& p) const;
    Vec grad_p(const Vec& q, const Vec& p) const;
};

// Evaluators for a coupling (running cost F or initial cost g) acting on
// empirical measures. grad_mu(q, mu, r) is the measure derivative evaluated
// at the r-th atom of mu; when no analytic form is given it falls back to
// n-scaled central differences moving that atom.
struct CouplingModel {
    std::function<double(const Vec& q, const EmpiricalMeasure&)> value;
    std::function<Vec(const Vec& q, const EmpiricalMeasure&)> grad_q_fn;
    std::function<Vec(const Vec& q, const EmpiricalMeasure&, std::size_t r)> grad_mu_fn;
    // d x d matrix, entry (a,b) = d/dx_a d/dq_b, evaluated at atom r
    std::function<Mat(const Vec& q, const EmpiricalMeasure&, std::size_t r)> grad_mu_grad_q_fn;
    RawCouplingGrad grad_q_raw;   // optional hot-path variant
    RawCouplingValue value_raw;   // optional hot-path variant
    double kappa = 0.0;  // declared Lipschitz budget for grad_q
    double fd_step = 1e-5;
    bool periodic_q = true;
    bool measure_dependent = true;

    double operator()(const Vec& q, const EmpiricalMeasure& mu) const {
        return value_raw ? value_raw(q.data(), mu, q.size()) : value(q, mu);
    }
    Vec grad_q(const Vec& q, const EmpiricalMeasure& mu) const;
    Vec grad_mu(const Vec& q, const EmpiricalMeasure& mu, std::size_t r) const;
    Mat grad_mu_grad_q(const Vec& q, const EmpiricalMeasure& mu, std::size_t r) const;
};

// Smooth periodic kernel with enough derivatives for the convolution
// coupling and its self-checks.
struct Kernel {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
    // third(i,j,k,y) = d^3 phi / dy_i dy_j dy_k; optional
    std::function<double(int, int, int, const Vec&)> third;
};

// phi(y) = amplitude * sum_i cos(2 pi y_i) / (2 pi)^2 ; even, 1-periodic.
Kernel cosine_kernel(double amplitude);

// The coefficient triple (H, F, g) with the momentum scaling theta. The
// constructor enforces theta > max{1, 5*sqrt(2)*kappa} where kappa is the
// larger of the two declared coupling budgets.
struct CoefficientTriple {
    HamiltonianModel hamiltonian;
    CouplingModel running_cost;  // F
    CouplingModel initial_cost;  // g
    double theta = 1.0;

    double kappa() const { return std::max(running_cost.kappa, initial_cost.kappa); }
    static double theta_floor(double kappa);

    static CoefficientTriple make(HamiltonianModel H, CouplingModel F, CouplingModel g,
                                  double theta);
};

// --- built-in families -------------------------------------------------

// H = |p|^2 / 2
HamiltonianModel builtin_quadratic_hamiltonian();

// H = |p|^2/2 + eps cos(2 pi sum p_i) + eps cos(2 pi sum q_i); nonconvex in p
// once eps is large enough.
HamiltonianModel builtin_nonconvex_hamiltonian(double eps);

// F(q, mu) = (1/n) sum_j phi(q - x_j) with analytic measure derivatives:
// grad_mu F(q,mu)(x) = -grad phi(q-x), grad_mu grad_q F(q,mu)(x) = -hess phi(q-x).
CouplingModel builtin_convolution_coupling(Kernel phi, double kappa);

// Convolution against the cosine kernel with hand-written evaluators on the
// solver's hot path; mathematically identical to
// builtin_convolution_coupling(cosine_kernel(amplitude), kappa).
CouplingModel builtin_cosine_convolution(double amplitude, double kappa);

// g(q,mu) = c; no q- or measure-dependence.
CouplingModel builtin_constant_cost(double c);

// grad_q g = a * (cos(2 pi q_1), ..., cos(2 pi q_d)); g = (a/2pi) sum sin(2 pi q_i).
CouplingModel builtin_cosine_grad_cost(double a);

// grad_q g = a (constant vector); g = a . q. The value is a non-periodic lift;
// only the gradient enters the dynamics.
CouplingModel builtin_linear_drift_cost(const Vec& a);

// grad_q g = a * q (linear gradient, for remainder studies on a chart away
// from the wrap seam); g = a |q|^2 / 2, non-periodic.
CouplingModel builtin_quadratic_well_cost(double a);

// --- finite-difference self-check --------------------------------------

struct DerivativeReport {
    struct Entry {
        std::string name;
        double max_error;
    };
    std::vector<Entry> entries;
    std::vector<std::string> flags;  // e.g. "theta_too_small", "kappa_exceeded:F"
    double observed_kappa = 0.0;

    bool ok() const { return flags.empty(); }
    double entry(const std::string& name) const;
};

// Probe analytic derivatives of (H,F,g) against central differences at
// `probes` random points of dimension d, audit the declared kappa budgets and
// the theta gate against the observed gradient norms.
DerivativeReport check_derivatives(const CoefficientTriple& triple, std::size_t d,
                                   std::size_t probes, double h, std::uint64_t seed = 2024);

}  // namespace mfg
