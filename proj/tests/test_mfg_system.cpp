#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "mfgtorus/mfg_system.hpp"

using namespace mfg;
using fixtures::quick_config;
using fixtures::scalar_triple;
using fixtures::spread_measure;
using fixtures::trivial_triple;

namespace {

MfgSolution build_scalar_solution(double a, int K, std::size_t m, std::size_t n = 8) {
    auto triple = scalar_triple(a);
    auto cfg = quick_config(0.1, 0.1, K);
    auto lattice = QueryLattice::uniform(1, m);
    auto field = solve(triple, cfg, spread_measure(n), lattice.points);
    return build_solution(field, triple, lattice);
}

}  // namespace

TEST_CASE("trivial scenario: U constant, residuals at machine precision") {
    auto triple = trivial_triple();
    auto cfg = quick_config();
    auto lattice = QueryLattice::uniform(1, 16);
    auto field = solve(triple, cfg, spread_measure(4), lattice.points);
    auto sol = build_solution(field, triple, lattice);
    for (int k = 0; k <= cfg.K; ++k)
        for (std::size_t j = 0; j < lattice.size(); ++j)
            CHECK(sol.U[k][j] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(hjb_residual(sol, triple) <= 1e-10);
    CHECK(continuity_residual(sol) <= 1e-12);
    CHECK(gradient_identity_check(sol, triple) <= 1e-10);
    CHECK(symmetry_check(field, triple) == 0.0);  // d = 1
}

TEST_CASE("U starts at g and matches the scalar oracle") {
    const double a = 0.05;
    auto sol = build_scalar_solution(a, 160, 64);
    auto& field = sol.field;
    auto triple = scalar_triple(a);
    oracle::Scalar1d ref{a, 0.1};

    // initial condition: z(0, q) = g(Sigma^1_0(q), sigma_0) on tracked points
    for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
        double expected = triple.initial_cost(field.sigma1[0][pt].coords, field.measure_at(0));
        CHECK(sol.z[0][pt] == doctest::Approx(expected).epsilon(1e-14));
    }

    // U against the closed form, on the lattice at several times
    double worst = 0.0;
    for (int k : {0, 40, 80, 120, 160}) {
        double t = field.t(k);
        for (std::size_t j = 0; j < sol.lattice.size(); ++j)
            worst = std::max(worst,
                             std::abs(sol.U[k][j] - ref.U(t, sol.lattice.points[j][0])));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("velocity field equals grad_p H at the particle images bitwise") {
    const double a = 0.05;
    auto sol = build_scalar_solution(a, 80, 16, 6);
    auto triple = scalar_triple(a);
    for (int k = 0; k <= sol.field.K(); ++k)
        for (std::size_t j = 0; j < sol.field.n_particles(); ++j) {
            Vec expect = triple.hamiltonian.grad_p(sol.field.sigma1[k][j].coords,
                                                   sol.field.sigma2[k][j]);
            CHECK(sol.velocity[k][j][0] == expect[0]);
        }
}

TEST_CASE("hjb residual decreases under simultaneous refinement") {
    const double a = 0.05;
    std::vector<double> resid;
    for (auto [K, m] : std::vector<std::pair<int, std::size_t>>{{40, 16}, {80, 32}}) {
        auto sol = build_scalar_solution(a, K, m, 4);
        resid.push_back(hjb_residual(sol, scalar_triple(a)));
    }
    CHECK(resid[1] <= resid[0] / 2.0);
}

TEST_CASE("hjb residual is invariant under constant shifts of g") {
    auto cfg = quick_config(0.1, 0.1, 40);
    auto lattice = QueryLattice::uniform(1, 16);
    auto mu = spread_measure(4);
    auto make = [&](double c) {
        auto triple = CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                              builtin_constant_cost(0.0),
                                              builtin_cosine_grad_cost(0.05), 4.0);
        // shift the initial cost by a constant: same gradient, shifted value
        auto g = triple.initial_cost;
        auto base_value = g.value;
        g.value = [base_value, c](const Vec& q, const EmpiricalMeasure& m2) {
            return base_value(q, m2) + c;
        };
        g.value_raw = nullptr;  // route evaluations through the shifted value
        return CoefficientTriple::make(triple.hamiltonian, triple.running_cost, g, 4.0);
    };
    auto t0 = make(0.0), t5 = make(5.0);
    auto f0 = solve(t0, cfg, mu, lattice.points);
    auto f5 = solve(t5, cfg, mu, lattice.points);
    auto s0 = build_solution(f0, t0, lattice);
    auto s5 = build_solution(f5, t5, lattice);
    CHECK(std::abs(s5.U[10][3] - s0.U[10][3] - 5.0) <= 1e-9);
    CHECK(hjb_residual(s5, t5) == doctest::Approx(hjb_residual(s0, t0)).epsilon(1e-6));
}

TEST_CASE("continuity residual: rigid translation and mass conservation") {
    // constant drift: particles translate rigidly, transport is exact
    Vec drift{0.3};
    auto triple = CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                          builtin_constant_cost(0.0),
                                          builtin_linear_drift_cost(drift), 4.0);
    auto cfg = quick_config(0.1, 0.1, 40);
    auto lattice = QueryLattice::uniform(1, 16);
    auto mu = spread_measure(4);
    auto field = solve(triple, cfg, mu, lattice.points);
    auto sol = build_solution(field, triple, lattice);
    // sigma_t is mu shifted by (t - s) * drift
    for (int k : {0, 20, 40}) {
        double shift = (field.t(k) - cfg.s) * drift[0];
        auto expected = pushforward(mu, [&](const TorusPoint& p) {
            return wrap({p[0] + shift});
        });
        CHECK(wasserstein_distance(field.measure_at(k), expected) <= 1e-9);
    }
    // the weak residual is pure time-discretization error, O(dt^2)
    double r40 = continuity_residual(sol);
    CHECK(r40 <= 1e-4);
    auto cfg80 = quick_config(0.1, 0.1, 80);
    auto field80 = solve(triple, cfg80, mu, lattice.points);
    double r80 = continuity_residual(build_solution(field80, triple, lattice));
    CHECK(r80 <= r40 / 3.5);

    // mass conservation is exact: the constant test function contributes zero
    auto triple2 = scalar_triple(0.05);
    auto field2 = solve(triple2, cfg, mu, lattice.points);
    auto sol2 = build_solution(field2, triple2, lattice);
    for (int k = 0; k <= cfg.K; ++k) CHECK(field2.measure_at(k).size() == mu.size());
    CHECK(continuity_residual(sol2) <= 1e-3);
}

TEST_CASE("gradient identity error shrinks under refinement") {
    const double a = 0.05;
    auto t = scalar_triple(a);
    double coarse = gradient_identity_check(build_scalar_solution(a, 40, 16, 4), t);
    double fine = gradient_identity_check(build_scalar_solution(a, 80, 32, 4), t);
    CHECK(fine <= coarse / 2.0);
    CHECK(fine <= 1e-4);
}

TEST_CASE("quadratic hamiltonian: v, V and grad U coincide") {
    const double a = 0.05;
    auto triple = scalar_triple(a);
    auto cfg = quick_config(0.1, 0.1, 80);
    auto lattice = QueryLattice::uniform(1, 16);
    auto field = solve(triple, cfg, spread_measure(6), lattice.points);
    auto sol = build_solution(field, triple, lattice);
    const double h = 1e-4;
    for (int k : {0, 20, 40, 60, 80}) {
        for (std::size_t j = 0; j < field.n_particles(); ++j) {
            // v at the particle image vs V there
            Vec vee = vee_field(field, triple, k, field.sigma1[k][j]);
            CHECK(sol.velocity[k][j][0] == doctest::Approx(vee[0]).epsilon(1e-6));
            // and vs the FD gradient of U at the image
            const TorusPoint& y = field.sigma1[k][j];
            double up = evaluate_U(sol, triple, k, wrap({y[0] + h}));
            double um = evaluate_U(sol, triple, k, wrap({y[0] - h}));
            CHECK((up - um) / (2 * h) == doctest::Approx(vee[0]).epsilon(1e-5));
        }
    }
}

TEST_CASE("symmetry check in two dimensions") {
    auto triple = fixtures::convolution_triple(0.05, 2);
    auto cfg = quick_config(0.1, 0.1, 24);
    auto lattice = QueryLattice::uniform(2, 4);
    auto mu = spread_measure(4, 2, 21);
    auto field = solve(triple, cfg, mu, lattice.points);
    double asym_coarse = symmetry_check(field, triple, 5);
    CHECK(asym_coarse <= 1e-3);

    auto cfg2 = quick_config(0.1, 0.1, 48);
    auto field2 = solve(triple, cfg2, mu, lattice.points);
    double asym_fine = symmetry_check(field2, triple, 5);
    CHECK(asym_fine <= asym_coarse / 1.9 + 1e-9);
}

TEST_CASE("flow identities at interior restart times") {
    const double a = 0.05;
    auto triple = scalar_triple(a);
    auto cfg = quick_config(0.1, 0.1, 80);
    auto mu = spread_measure(6);
    auto queries = fixtures::line_queries(8);

    // t0 = s: both solves are the same problem
    auto rep_same = flow_identity_check(triple, cfg, mu, cfg.s_index(), queries);
    CHECK(rep_same.worst() <= 10 * cfg.tol_fixed_point);

    // stationary scenario: identities are exact for any t0
    auto rep_triv = flow_identity_check(trivial_triple(), cfg, spread_measure(4),
                                        cfg.s_index() / 2, queries);
    CHECK(rep_triv.worst() <= 1e-12);

    // scalar scenario at t0 = s/2
    auto rep = flow_identity_check(triple, cfg, mu, cfg.s_index() / 2, queries);
    double dt = cfg.dt();
    double budget = 10 * cfg.tol_fixed_point + 5 * dt * dt;
    CHECK(rep.composition_error <= budget);
    CHECK(rep.inverse_error <= budget);
    CHECK(rep.vee_error <= budget);
}

TEST_CASE("uniqueness-style consistency of the rebuilt solution") {
    const double a = 0.05;
    auto triple = scalar_triple(a);
    auto cfg = quick_config(0.1, 0.1, 80);
    auto lattice = QueryLattice::uniform(1, 16);
    auto mu = spread_measure(6);
    const int ks = cfg.s_index();
    auto rep = uniqueness_consistency(triple, cfg, mu, lattice, {ks / 4, ks / 2});
    double dt = cfg.dt();
    double budget = 10 * cfg.tol_fixed_point + 5 * dt * dt;
    CHECK(rep.sup_U_diff <= budget);
    CHECK(rep.max_wasserstein <= budget);

    // invariance under particle relabeling
    EmpiricalMeasure perm = mu;
    std::rotate(perm.particles.begin(), perm.particles.begin() + 1, perm.particles.end());
    auto rep2 = uniqueness_consistency(triple, cfg, perm, lattice, {ks / 2});
    auto rep1 = uniqueness_consistency(triple, cfg, mu, lattice, {ks / 2});
    CHECK(rep1.sup_U_diff == doctest::Approx(rep2.sup_U_diff).epsilon(1e-9));
}

TEST_CASE("mass path is Lipschitz in time") {
    // W(sigma_k, sigma_k') <= (observed sup |dSigma^1/dt|) |t_k - t_k'| + slack
    auto triple = fixtures::convolution_triple(0.05);
    auto cfg = quick_config(0.1, 0.08, 50);
    auto mu = spread_measure(4, 1, 3);
    auto field = solve(triple, cfg, mu, {});
    auto led = bounds_audit(field, triple);
    const double dt = cfg.dt();
    for (int k = 0; k < cfg.K; k += 5)
        for (int k2 = k + 1; k2 <= cfg.K; k2 += 7) {
            double w = wasserstein_distance(field.measure_at(k), field.measure_at(k2));
            CHECK(w <= led.sup_dt_sigma1 * (k2 - k) * dt * (1.0 + 1e-6) + 1e-12);
        }
}

TEST_CASE("trivial uniqueness discrepancies vanish") {
    auto triple = trivial_triple();
    auto cfg = quick_config();
    auto lattice = QueryLattice::uniform(1, 8);
    auto rep = uniqueness_consistency(triple, cfg, spread_measure(4), lattice, {10, 20});
    CHECK(rep.sup_U_diff <= 1e-12);
    CHECK(rep.max_wasserstein <= 1e-12);
}
