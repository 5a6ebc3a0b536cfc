#pragma once

#include <optional>

#include "mfgtorus/coefficients.hpp"

namespace mfg {

struct SolverConfig {
    double T = 0.1;
    double s = 0.1;  // terminal time for Sigma^1; must lie on the time grid
    int K = 100;     // uniform grid t_k = k T / K, k = 0..K
    double tol_fixed_point = 1e-10;
    int max_iters = 50;
    double fd_step_q = 1e-5;  // spatial finite differences (h_q)
    double fd_step_x = 1e-4;  // particle finite differences (h_x)
    double newton_tol = 1e-10;
    int newton_max_iters = 30;

    double dt() const { return T / K; }
    // index of s on the grid; throws if s is off-grid
    int s_index() const;
    void validate() const;
};

struct ConvergenceTrace {
    std::vector<double> diffs;   // scaled sup-norm successive differences
    std::vector<double> ratios;  // diffs[k] / diffs[k-1]
    int iterations = 0;
    double final_diff = 0.0;
};

// Candidate Z = (Q, P) for the fixed-point operator, stored at every grid
// time and tracked point (particles first, then queries). Momenta are the
// unscaled P = Sigma^2.
struct Candidate {
    std::vector<std::vector<TorusPoint>> q;  // [k][pt]
    std::vector<std::vector<Vec>> p;         // [k][pt]
};

// Grid + data defining one characteristic solve.
struct ProblemSetup {
    SolverConfig cfg;
    EmpiricalMeasure mu;
    std::vector<TorusPoint> queries;

    std::size_t n_particles() const { return mu.size(); }
    std::size_t n_points() const { return mu.size() + queries.size(); }
    const TorusPoint& base_point(std::size_t idx) const {
        return idx < mu.size() ? mu.particles[idx] : queries[idx - mu.size()];
    }
};

// Converged characteristic field Sigma = (Sigma^1, Sigma^2)[s, mu] on the
// grid, tracked at the particles of mu plus the query points.
struct CharacteristicField {
    ProblemSetup setup;
    std::vector<std::vector<TorusPoint>> sigma1;  // [k][pt]
    std::vector<std::vector<Vec>> sigma2;         // [k][pt]
    std::vector<EmpiricalMeasure> sigma_path;     // particle rows per k
    ConvergenceTrace trace;

    double dt() const { return setup.cfg.dt(); }
    int K() const { return setup.cfg.K; }
    int s_index() const { return setup.cfg.s_index(); }
    double t(int k) const { return k * dt(); }
    std::size_t n_particles() const { return setup.n_particles(); }
    std::size_t n_points() const { return setup.n_points(); }
    const EmpiricalMeasure& measure_at(int k) const { return sigma_path[k]; }
    // index of the tracked query q (particles occupy 0..n-1)
    std::size_t query_index(std::size_t i) const { return n_particles() + i; }
};

// One application of the integral operator: component 1 is
// q + int_s^t grad_p H(Q,P), component 2 is
// grad_q g(Q_0, Q_0 # mu) - int_0^t [grad_q H + grad_q F(Q, Q # mu)].
// Time integrals are composite trapezoid on the grid; the pushforward uses
// the particle rows only.
Candidate apply_operator(const Candidate& z, const CoefficientTriple& triple,
                         const ProblemSetup& setup);

// Scaled sup-norm distance between candidates: sup over (k, pt) of
// sqrt(|dQ|^2 + |dP|^2 / theta^2) with wrapped position differences.
double candidate_distance(const Candidate& a, const Candidate& b, double theta);

// Picard iteration from Z0 = (q, 0) to the fixed point. Throws
// NoConvergenceError (with the ratio history) on divergence.
CharacteristicField solve(const CoefficientTriple& triple, const SolverConfig& cfg,
                          const EmpiricalMeasure& mu,
                          const std::vector<TorusPoint>& queries = {});

// Per-iteration contraction ratios of a converged field; max is the observed
// contraction factor.
struct ContractionReport {
    std::vector<double> ratios;
    double max_ratio = 0.0;
};
ContractionReport contraction_report(const CharacteristicField& field);

// Characteristic through a single extra point, with the already-converged
// particle trajectories (the measure path) frozen.
struct PointTrajectory {
    std::vector<TorusPoint> sigma1;
    std::vector<Vec> sigma2;
};
PointTrajectory solve_frozen(const CharacteristicField& field, const CoefficientTriple& triple,
                             const TorusPoint& x);

// Finite-difference Jacobian d Sigma^1_t / d q at point x (entry (b,a) =
// d Sigma1_b / d q_a), via frozen solves at x +/- h e_a; one pair of solves
// serves every grid time, so the Jacobians are returned for all k.
std::vector<Mat> sigma1_jacobians(const CharacteristicField& field,
                                  const CoefficientTriple& triple, const TorusPoint& x, double h);
std::vector<Mat> sigma2_jacobians(const CharacteristicField& field,
                                  const CoefficientTriple& triple, const TorusPoint& x, double h);

// Observed sup norms of the field and its finite-difference derivatives,
// with optional declared caps.
struct DeclaredCaps {
    double A1, theta_A2, theta_B, E, E1, theta_E2;
};
struct BoundsLedger {
    double sup_sigma2 = 0, sup_dt_sigma1 = 0, sup_dt_sigma2 = 0;
    double sup_dq_sigma1 = 0, sup_dq_sigma2 = 0;
    double sup_dqq_sigma1 = 0, sup_dqq_sigma2 = 0;
    double sup_dtt_sigma1 = 0, sup_dtt_sigma2 = 0;
    std::optional<DeclaredCaps> caps;
    std::vector<std::string> flags;

    bool all_finite() const;
};
BoundsLedger bounds_audit(const CharacteristicField& field, const CoefficientTriple& triple,
                          std::optional<DeclaredCaps> caps = std::nullopt,
                          std::size_t max_audit_points = 8);

// n-scaled derivative of Sigma with respect to particle j, estimated by
// re-solving the fixed point at x_j +/- h_x e_a. Entry (b,a) of each block is
// n * d Sigma_b / d x_j^a.
struct SensitivityBlocks {
    Mat dsigma1, dsigma2;
};

// Central-difference sensitivities for particle j at every grid time, at the
// particles themselves (position j evaluated passively at the unperturbed
// point) and at the requested extra points.
struct SensitivityField {
    // [k][idx]: idx 0..n-1 are the particles, then the extra points
    std::vector<std::vector<SensitivityBlocks>> at;
    std::size_t n_particles = 0;
};
SensitivityField particle_sensitivity_field(const CoefficientTriple& triple,
                                            const SolverConfig& cfg, const EmpiricalMeasure& mu,
                                            std::size_t j,
                                            const std::vector<TorusPoint>& extra_points);

// Single-point view: n * dSigma(t_k, q)/dx_j.
SensitivityBlocks particle_sensitivity(const CoefficientTriple& triple, const SolverConfig& cfg,
                                       const EmpiricalMeasure& mu, std::size_t j, int k,
                                       const TorusPoint& q);

// Worst observed ratio |first-order remainder| / (dt^2 + dq^2 + dx^2) over
// random perturbations at the given scale; bounded ratios across shrinking
// scales witness the first-order expansion.
double taylor_remainder_ratio(const CoefficientTriple& triple, const SolverConfig& cfg,
                              const EmpiricalMeasure& mu, const TorusPoint& q, double scale,
                              std::size_t trials, std::uint64_t seed);

}  // namespace mfg
