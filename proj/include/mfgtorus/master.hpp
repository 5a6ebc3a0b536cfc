#pragma once

#include "mfgtorus/mfg_system.hpp"

namespace mfg {

// Full value function u(s,q,mu) and its derivatives at one evaluation point.
// grad_mu_u[j] is the measure gradient sampled at particle x_j (the n-scaled
// particle derivative).
struct MasterEvaluation {
    double s = 0.0;
    Vec q;
    double u = 0.0;
    Vec grad_q_u;
    std::vector<Vec> grad_mu_u;
    double partial_s_u = 0.0;
    double residual = 0.0;
    double grad_q_fd_error = 0.0;  // |analytic - FD| cross-check on grad_q u
    std::size_t solves_performed = 0;
};

// Pathwise gradient ingredients at one (grid time, particle) pair.
struct PathwiseGradientSample {
    int k = 0;
    std::size_t j = 0;
    Vec N_F;          // n-scaled particle derivative of F(q, sigma_t)
    Vec N_g;          // same for g at t = 0
    Vec nabla_mu_H;   // n-scaled particle derivative of H(q, V(t,q))
    SensitivityBlocks sigma_sensitivities;  // n dSigma/dx_j at the inverse label X_t(q)
};

// u(s,q,mu) = g(q, Sigma^1_0 # mu) - int_0^s [H(q, V(tau,q)) + F(q, Sigma^1_tau # mu)] dtau
// (trapezoid on the grid restricted to [0,s]).
double evaluate_u(const CoefficientTriple& triple, const SolverConfig& cfg,
                  const EmpiricalMeasure& mu, const TorusPoint& q);

// grad_q u(s,q,mu) = Sigma^2[s,mu](s,q). With fd_error non-null, also runs the
// central-difference cross-check of evaluate_u in q and reports the
// discrepancy.
Vec grad_q_u(const CoefficientTriple& triple, const SolverConfig& cfg, const EmpiricalMeasure& mu,
             const TorusPoint& q, double* fd_error = nullptr);

// Pathwise gradients at (t_k, particle j) for the evaluation point q.
PathwiseGradientSample pathwise_gradients(const CoefficientTriple& triple, const SolverConfig& cfg,
                                          const EmpiricalMeasure& mu, const TorusPoint& q, int k,
                                          std::size_t j);

// Upsilon[s,mu](q, x_j): the measure gradient of u sampled at particle j,
// assembled from the pathwise gradients by trapezoid over [0,s].
Vec upsilon(const CoefficientTriple& triple, const SolverConfig& cfg, const EmpiricalMeasure& mu,
            const TorusPoint& q, std::size_t j);

// Independent route: n-scaled central difference of evaluate_u moving
// particle j (step cfg.fd_step_x), re-solving the field per perturbation.
Vec grad_mu_u_fd(const CoefficientTriple& triple, const SolverConfig& cfg,
                 const EmpiricalMeasure& mu, const TorusPoint& q, std::size_t j);

// Central difference of evaluate_u in s with step dt = T/K (one-sided
// second-order at the ends of the grid).
double partial_s_u(const CoefficientTriple& triple, const SolverConfig& cfg,
                   const EmpiricalMeasure& mu, const TorusPoint& q);

// partial_s u + (1/n) sum_j Upsilon(x_j) . grad_p H(x_j, grad_q u(s,x_j,mu))
//             + H(q, grad_q u(s,q,mu)) + F(q, mu)
double master_residual(const CoefficientTriple& triple, const SolverConfig& cfg,
                       const EmpiricalMeasure& mu, const TorusPoint& q);

// Everything at once, sharing the solves.
MasterEvaluation evaluate_master(const CoefficientTriple& triple, const SolverConfig& cfg,
                                 const EmpiricalMeasure& mu, const TorusPoint& q,
                                 bool with_fd_cross_check = false);

}  // namespace mfg
