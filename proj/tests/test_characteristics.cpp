#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace mfg;
using fixtures::line_queries;
using fixtures::quick_config;
using fixtures::scalar_triple;
using fixtures::spread_measure;
using fixtures::trivial_triple;

TEST_CASE("stationary scenario is an exact fixed point") {
    auto triple = trivial_triple();
    auto cfg = quick_config();
    auto mu = spread_measure(4);
    auto field = solve(triple, cfg, mu, line_queries(8));

    CHECK(field.trace.iterations <= 2);
    for (int k = 0; k <= cfg.K; ++k) {
        for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
            CHECK(torus_dist(field.sigma1[k][pt], field.setup.base_point(pt)) == 0.0);
            CHECK(norm2(field.sigma2[k][pt]) == 0.0);
        }
    }
    auto rep = contraction_report(field);
    CHECK(rep.max_ratio == 0.0);
}

TEST_CASE("apply_operator holds the terminal slice fixed") {
    auto triple = scalar_triple();
    auto cfg = quick_config();
    auto mu = spread_measure(3);
    ProblemSetup setup{cfg, mu, line_queries(4)};
    // an arbitrary candidate: positions shifted, momenta nonzero
    Candidate z;
    const std::size_t total = setup.n_points();
    z.q.assign(cfg.K + 1, std::vector<TorusPoint>(total));
    z.p.assign(cfg.K + 1, std::vector<Vec>(total, Vec{0.3}));
    for (int k = 0; k <= cfg.K; ++k)
        for (std::size_t pt = 0; pt < total; ++pt)
            z.q[k][pt] = wrap({setup.base_point(pt)[0] + 0.1 * k / cfg.K});
    auto out = apply_operator(z, triple, setup);
    const int ks = cfg.s_index();
    for (std::size_t pt = 0; pt < total; ++pt)
        CHECK(torus_dist(out.q[ks][pt], setup.base_point(pt)) == 0.0);
}

TEST_CASE("operator application reproduces the trapezoid integral") {
    // with the candidate frozen at the solution, one application must return
    // the solution up to the fixed-point tolerance
    auto triple = scalar_triple();
    auto cfg = quick_config(0.1, 0.1, 80);
    auto mu = spread_measure(4);
    auto field = solve(triple, cfg, mu, line_queries(6));
    Candidate z{field.sigma1, field.sigma2};
    auto once = apply_operator(z, triple, field.setup);
    CHECK(candidate_distance(once, z, triple.theta) <= 2.0 * cfg.tol_fixed_point);
}

TEST_CASE("scalar scenario matches the bisection oracle") {
    const double a = 0.05;
    auto triple = scalar_triple(a);
    auto cfg = quick_config(0.1, 0.1, 160);
    auto mu = spread_measure(8);
    auto queries = line_queries(64);
    auto field = solve(triple, cfg, mu, queries);
    oracle::Scalar1d ref{a, cfg.s};

    double worst1 = 0.0, worst2 = 0.0;
    for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
        double x = field.setup.base_point(pt)[0];
        // Sigma^1(0, x) and the constant momentum
        worst1 = std::max(worst1,
                          torus_dist(field.sigma1[0][pt], wrap({ref.initial_position(x)})));
        for (int k = 0; k <= cfg.K; ++k)
            worst2 = std::max(worst2, std::abs(field.sigma2[k][pt][0] - ref.sigma2(x)));
    }
    CHECK(worst1 <= 1e-6);
    CHECK(worst2 <= 1e-6);

    // contraction ratios strictly below one
    auto rep = contraction_report(field);
    CHECK(rep.ratios.size() >= 1);
    CHECK(rep.max_ratio < 1.0);
    CHECK(field.trace.iterations <= 50);
}

TEST_CASE("terminal condition is exact for any converged field") {
    auto triple = scalar_triple();
    auto cfg = quick_config(0.1, 0.05, 40);
    auto mu = spread_measure(5);
    auto field = solve(triple, cfg, mu, line_queries(4));
    const int ks = field.s_index();
    CHECK(ks == 20);
    for (std::size_t pt = 0; pt < field.n_points(); ++pt)
        CHECK(torus_dist(field.sigma1[ks][pt], field.setup.base_point(pt)) == 0.0);
    // initial condition for Sigma^2 within the fixed-point tolerance
    for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
        Vec expected = triple.initial_cost.grad_q(field.sigma1[0][pt].coords, field.measure_at(0));
        CHECK(std::abs(field.sigma2[0][pt][0] - expected[0]) <= 10 * cfg.tol_fixed_point);
    }
}

TEST_CASE("differential form of the characteristic system") {
    // centered time difference of Sigma^1 matches grad_p H(Sigma^1, Sigma^2)
    // to second order: the measured convergence rate across K in {40,80,160}
    // must be at least 1.8
    auto triple = scalar_triple();
    auto mu = spread_measure(4);
    std::vector<double> errs;
    for (int K : {40, 80, 160}) {
        auto cfg = quick_config(0.1, 0.1, K);
        auto field = solve(triple, cfg, mu, line_queries(8));
        double dt = field.dt();
        double worst = 0.0;
        for (int k = 1; k < K; ++k) {
            for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
                auto diff = min_displacement(field.sigma1[k - 1][pt], field.sigma1[k + 1][pt]);
                Vec rhs = triple.hamiltonian.grad_p(field.sigma1[k][pt].coords,
                                                    field.sigma2[k][pt]);
                worst = std::max(worst, std::abs(diff[0] / (2 * dt) - rhs[0]));
            }
        }
        errs.push_back(worst);
    }
    // for this scenario the momentum is constant in t, so the centered
    // difference is exact up to solver tolerance; rates degenerate. Use a
    // time-varying field instead: nonconvex H makes grad_q H nonzero.
    auto bumpy = CoefficientTriple::make(builtin_nonconvex_hamiltonian(0.02),
                                         builtin_constant_cost(0.0),
                                         builtin_cosine_grad_cost(0.05), 4.0);
    errs.clear();
    for (int K : {40, 80, 160}) {
        auto cfg = quick_config(0.1, 0.1, K);
        auto field = solve(bumpy, cfg, mu, line_queries(8));
        double dt = field.dt();
        double worst = 0.0;
        for (int k = 1; k < K; ++k) {
            for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
                auto diff = min_displacement(field.sigma1[k - 1][pt], field.sigma1[k + 1][pt]);
                Vec rhs = bumpy.hamiltonian.grad_p(field.sigma1[k][pt].coords,
                                                   field.sigma2[k][pt]);
                worst = std::max(worst, std::abs(diff[0] / (2 * dt) - rhs[0]));
            }
        }
        errs.push_back(worst);
    }
    double rate1 = std::log2(errs[0] / errs[1]);
    double rate2 = std::log2(errs[1] / errs[2]);
    CHECK(rate1 >= 1.8);
    CHECK(rate2 >= 1.8);
}

TEST_CASE("divergence is detected for long horizons") {
    auto strong = CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                          builtin_constant_cost(0.0),
                                          builtin_cosine_grad_cost(1.0), 50.0);
    auto cfg = quick_config(5.0, 5.0, 50);
    auto mu = spread_measure(4);
    bool threw = false;
    try {
        solve(strong, cfg, mu, line_queries(4));
    } catch (const NoConvergenceError& e) {
        threw = true;
        bool has_bad_ratio = false;
        for (double r : e.ratios) has_bad_ratio = has_bad_ratio || r >= 1.0;
        CHECK((has_bad_ratio || e.ratios.empty()));
    }
    CHECK(threw);
}

TEST_CASE("determinism: identical inputs give bitwise identical fields") {
    auto triple = fixtures::convolution_triple();
    auto cfg = quick_config(0.1, 0.08, 50);
    auto mu = spread_measure(4, 1, 3);
    auto f1 = solve(triple, cfg, mu, line_queries(4));
    auto f2 = solve(triple, cfg, mu, line_queries(4));
    for (int k = 0; k <= cfg.K; ++k)
        for (std::size_t pt = 0; pt < f1.n_points(); ++pt) {
            CHECK(f1.sigma1[k][pt][0] == f2.sigma1[k][pt][0]);
            CHECK(f1.sigma2[k][pt][0] == f2.sigma2[k][pt][0]);
        }
}

TEST_CASE("bounds audit on the stationary and scalar scenarios") {
    {
        auto field = solve(trivial_triple(), quick_config(), spread_measure(4), line_queries(4));
        auto led = bounds_audit(field, trivial_triple());
        CHECK(led.all_finite());
        CHECK(led.sup_dt_sigma1 <= 1e-8);
        CHECK(led.sup_sigma2 <= 1e-12);
        CHECK(led.sup_dq_sigma1 == doctest::Approx(1.0).epsilon(1e-6));  // identity in d = 1
        CHECK(led.sup_dqq_sigma1 <= 1e-5);
    }
    {
        const double a = 0.05;
        auto triple = scalar_triple(a);
        // x = s*a is the label whose characteristic starts at 0, where the
        // momentum a*cos(2*pi*0) attains its maximum a exactly
        auto queries = line_queries(8);
        queries.push_back(wrap({0.1 * a}));
        auto field = solve(triple, quick_config(0.1, 0.1, 80), spread_measure(4), queries);
        auto led = bounds_audit(field, triple);
        CHECK(led.all_finite());
        CHECK(std::abs(led.sup_sigma2 - a) <= 1e-8);
        // declared caps produce flags only when violated
        DeclaredCaps caps{10.0, 10.0, 10.0, 10.0, 10.0, 10.0};
        auto ok = bounds_audit(field, triple, caps);
        CHECK(ok.flags.empty());
        DeclaredCaps tight{1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6};
        auto bad = bounds_audit(field, triple, tight);
        CHECK(!bad.flags.empty());
    }
}

TEST_CASE("frozen solve agrees with tracked trajectories") {
    auto triple = fixtures::convolution_triple();
    auto cfg = quick_config(0.1, 0.08, 50);
    auto mu = spread_measure(4, 1, 3);
    auto queries = line_queries(4);
    auto field = solve(triple, cfg, mu, queries);
    auto traj = solve_frozen(field, triple, queries[2]);
    const std::size_t row = field.query_index(2);
    for (int k = 0; k <= cfg.K; ++k) {
        CHECK(torus_dist(traj.sigma1[k], field.sigma1[k][row]) <= 10 * cfg.tol_fixed_point);
        CHECK(std::abs(traj.sigma2[k][0] - field.sigma2[k][row][0]) <= 10 * cfg.tol_fixed_point);
    }
}

TEST_CASE("particle sensitivities") {
    auto cfg = quick_config(0.1, 0.1, 40);
    cfg.tol_fixed_point = 1e-12;
    auto mu = spread_measure(4, 1, 13);
    auto q = wrap({0.37});

    SUBCASE("measure-independent couplings give zero sensitivity") {
        auto triple = scalar_triple();
        auto blocks = particle_sensitivity(triple, cfg, mu, 1, 20, q);
        CHECK(blocks.dsigma1.cwiseAbs().maxCoeff() <= 1e-6);
        CHECK(blocks.dsigma2.cwiseAbs().maxCoeff() <= 1e-6);
    }

    SUBCASE("swapping particles swaps sensitivities") {
        auto triple = fixtures::convolution_triple();
        auto blocks_j = particle_sensitivity(triple, cfg, mu, 1, 30, q);
        EmpiricalMeasure swapped = mu;
        std::swap(swapped.particles[1], swapped.particles[2]);
        auto blocks_swapped = particle_sensitivity(triple, cfg, swapped, 2, 30, q);
        CHECK((blocks_j.dsigma1 - blocks_swapped.dsigma1).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((blocks_j.dsigma2 - blocks_swapped.dsigma2).cwiseAbs().maxCoeff() <= 1e-10);
    }

    SUBCASE("n-scaled sensitivity is stable in n") {
        auto triple = fixtures::convolution_triple();
        std::vector<double> scaled_norms, raw_norms;
        for (std::size_t n : {4, 8, 16}) {
            auto mun = spread_measure(n, 1, 29);
            auto blocks = particle_sensitivity(triple, cfg, mun, 0, 20, q);
            double nn = std::sqrt(blocks.dsigma1.squaredNorm() + blocks.dsigma2.squaredNorm());
            scaled_norms.push_back(nn);
            raw_norms.push_back(nn / static_cast<double>(n));
        }
        // n * dSigma/dx_j stays within 20% across the doubling sweep
        double lo = *std::min_element(scaled_norms.begin(), scaled_norms.end());
        double hi = *std::max_element(scaled_norms.begin(), scaled_norms.end());
        CHECK(hi <= 1.2 * lo);
        // while the raw derivative halves per doubling (within slack)
        CHECK(raw_norms[1] <= 0.65 * raw_norms[0]);
        CHECK(raw_norms[2] <= 0.65 * raw_norms[1]);
    }
}

TEST_CASE("taylor remainder stays bounded as increments shrink") {
    auto triple = fixtures::convolution_triple();
    auto cfg = quick_config(0.1, 0.1, 100);
    auto mu = spread_measure(4, 1, 19);
    auto q = wrap({0.41});
    std::vector<double> ratios;
    for (double scale : {1e-2, 5e-3, 2.5e-3})
        ratios.push_back(taylor_remainder_ratio(triple, cfg, mu, q, scale, 4, 77));
    double floor = 1e-2;  // FD noise floor for the ratio
    CHECK(ratios[1] <= 3.0 * std::max(ratios[0], floor));
    CHECK(ratios[2] <= 3.0 * std::max(ratios[0], floor));
}
