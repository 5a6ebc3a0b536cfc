#pragma once

#include "mfgtorus/inverse_flow.hpp"

namespace mfg {

// Uniform periodic lattice of query points: per_axis points per dimension,
// spacing 1/per_axis, row-major index with axis 0 fastest.
struct QueryLattice {
    std::size_t d = 1;
    std::size_t per_axis = 1;
    std::vector<TorusPoint> points;

    static QueryLattice uniform(std::size_t d, std::size_t per_axis);
    std::size_t size() const { return points.size(); }
    double spacing() const { return 1.0 / static_cast<double>(per_axis); }
    // index of the lattice neighbor shifted by `offset` steps along `axis`
    std::size_t neighbor(std::size_t idx, std::size_t axis, long offset) const;
};

// Classical MFG solution assembled from a characteristic field: value
// function U on (time grid x query lattice), the mass path sigma, the value
// z along every tracked characteristic, and the velocity at the particle
// images.
struct MfgSolution {
    CharacteristicField field;
    QueryLattice lattice;
    std::vector<std::vector<double>> U;         // [k][lattice idx]
    std::vector<std::vector<double>> z;         // [k][tracked point]
    std::vector<std::vector<Vec>> velocity;     // [k][particle], at Sigma^1_k(x_j)
};

// Integrate the value along one characteristic:
// z' = Sigma^2 . grad_p H - H - F(Sigma^1, sigma_t), z(0) = g(Sigma^1_0, sigma_0).
std::vector<double> value_along(const PointTrajectory& traj, const CharacteristicField& field,
                                const CoefficientTriple& triple);

// Build (U, sigma, v): U(t_k, q_j) = z(t_k, X_{t_k}(q_j)) with per-column
// warm-started Newton inversions. The field must have been solved with the
// lattice points as its queries.
MfgSolution build_solution(const CharacteristicField& field, const CoefficientTriple& triple,
                           const QueryLattice& lattice);

// U at an arbitrary (grid time, point) by the z/X composition (no
// interpolation).
double evaluate_U(const MfgSolution& sol, const CoefficientTriple& triple, int k,
                  const TorusPoint& q, const TorusPoint* label_guess = nullptr);

// sup over the (t,q) grid of |dU/dt + H(q, grad U) + F(q, sigma_t)| with
// centered differences (2nd-order one-sided at the end slices).
double hjb_residual(const MfgSolution& sol, const CoefficientTriple& triple);

// Weak continuity-equation residual against the built-in trigonometric test
// set {1} u {sin, cos(2 pi k.x) : |k|_inf <= max_freq}.
double continuity_residual(const MfgSolution& sol, std::size_t max_freq = 2);

// sup over strided grid times and tracked queries of
// |FD grad_q U(t, Sigma^1_t(q)) - Sigma^2_t(q)|. h defaults to a quarter of
// the lattice spacing so it refines with the lattice.
double gradient_identity_check(const MfgSolution& sol, const CoefficientTriple& triple,
                               std::size_t time_slices = 5, double h = 0.0);

// max over strided grid times and queries of the asymmetry of the FD
// Jacobian of V(t, .); identically zero in d = 1.
double symmetry_check(const CharacteristicField& field, const CoefficientTriple& triple,
                      std::size_t time_slices = 5, double h = 1e-3);

// The two-parameter flow identities, checked by re-solving at (t0, sigma_t0):
// composition of the flows, mutual inverses at t = s, and agreement of the
// momentum-in-space fields.
struct FlowIdentityReport {
    double composition_error = 0.0;
    double inverse_error = 0.0;
    double vee_error = 0.0;

    double worst() const;
};
FlowIdentityReport flow_identity_check(const CoefficientTriple& triple, const SolverConfig& cfg,
                                       const EmpiricalMeasure& mu, int k0,
                                       const std::vector<TorusPoint>& queries);

// Rebuild (U, sigma) from the re-solved field at (t0, sigma_t0) and report
// the discrepancies; the computational counterpart of uniqueness.
struct UniquenessReport {
    double sup_U_diff = 0.0;
    double max_wasserstein = 0.0;
};
UniquenessReport uniqueness_consistency(const CoefficientTriple& triple, const SolverConfig& cfg,
                                        const EmpiricalMeasure& mu, const QueryLattice& lattice,
                                        const std::vector<int>& t0_indices);

}  // namespace mfg
