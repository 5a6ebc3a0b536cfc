#pragma once

// Shared test fixtures: the standard coefficient triples and configurations.

#include "mfgtorus/characteristics.hpp"

namespace fixtures {

using namespace mfg;

// quadratic H, F = 0, g constant: stationary characteristics
inline CoefficientTriple trivial_triple() {
    return CoefficientTriple::make(builtin_quadratic_hamiltonian(), builtin_constant_cost(0.0),
                                   builtin_constant_cost(1.0), 2.0);
}

// quadratic H, F = 0, grad g = a cos(2 pi q)
inline CoefficientTriple scalar_triple(double a = 0.05) {
    return CoefficientTriple::make(builtin_quadratic_hamiltonian(), builtin_constant_cost(0.0),
                                   builtin_cosine_grad_cost(a), 4.0);
}

// quadratic H, convolution F and g (measure-coupled)
inline CoefficientTriple convolution_triple(double amp = 0.05, std::size_t d = 1) {
    const double kappa = amp * 2.0 * 3.14159265358979323846 * std::sqrt(static_cast<double>(d));
    return CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                   builtin_cosine_convolution(amp, kappa),
                                   builtin_cosine_convolution(amp, kappa), 4.0);
}

inline SolverConfig quick_config(double T = 0.1, double s = 0.1, int K = 40) {
    SolverConfig cfg;
    cfg.T = T;
    cfg.s = s;
    cfg.K = K;
    return cfg;
}

inline EmpiricalMeasure spread_measure(std::size_t n, std::size_t d = 1,
                                       std::uint64_t seed = 11) {
    UniformSampler rng(seed);
    std::vector<Vec> pts(n, Vec(d));
    for (auto& p : pts)
        for (double& c : p) c = rng.next();
    return make_measure(pts);
}

inline std::vector<TorusPoint> line_queries(std::size_t m) {
    std::vector<TorusPoint> qs;
    for (std::size_t i = 0; i < m; ++i)
        qs.push_back(wrap({static_cast<double>(i) / static_cast<double>(m)}));
    return qs;
}

}  // namespace fixtures
