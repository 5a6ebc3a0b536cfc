#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mfgtorus/transport.hpp"

using namespace mfg;

namespace {

EmpiricalMeasure random_measure(UniformSampler& rng, std::size_t n, std::size_t d) {
    std::vector<Vec> pts(n, Vec(d));
    for (auto& p : pts)
        for (double& c : p) c = rng.next();
    return make_measure(pts);
}

}  // namespace

TEST_CASE("wasserstein matches hand examples") {
    auto mu = make_measure({{0.0}, {0.5}});
    auto nu = make_measure({{0.1}, {0.6}});
    auto plan = wasserstein(mu, nu);
    CHECK(plan.distance() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(plan.assignment[0] == 0);
    CHECK(plan.assignment[1] == 1);

    auto self = wasserstein(mu, mu);
    CHECK(self.distance() == doctest::Approx(0.0));
    CHECK(self.assignment[0] == 0);

    auto a = make_measure({{0.95}});
    auto b = make_measure({{0.05}});
    CHECK(wasserstein(a, b).distance() == doctest::Approx(0.1).epsilon(1e-12));

    CHECK_THROWS_AS(wasserstein(mu, a), std::invalid_argument);
}

TEST_CASE("hungarian equals brute force on random instances") {
    UniformSampler rng(123);
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t n = 2 + static_cast<std::size_t>(rng.next() * 7);  // 2..8
        std::size_t d = 1 + static_cast<std::size_t>(rng.next() * 2);
        auto mu = random_measure(rng, n, d);
        auto nu = random_measure(rng, n, d);
        auto fast = wasserstein(mu, nu, AssignmentMethod::hungarian);
        auto slow = wasserstein(mu, nu, AssignmentMethod::brute_force);
        CHECK(std::abs(fast.cost - slow.cost) <= 1e-12);
    }
}

TEST_CASE("metric axioms on equal-n measures") {
    UniformSampler rng(9);
    for (int rep = 0; rep < 40; ++rep) {
        auto mu = random_measure(rng, 5, 2);
        auto nu = random_measure(rng, 5, 2);
        auto rho = random_measure(rng, 5, 2);
        double ab = wasserstein_distance(mu, nu);
        CHECK(ab == doctest::Approx(wasserstein_distance(nu, mu)).epsilon(1e-10));
        CHECK(wasserstein_distance(mu, rho) <= ab + wasserstein_distance(nu, rho) + 1e-10);
    }
    // identity of indiscernibles up to permutation
    auto mu = make_measure({{0.1, 0.2}, {0.6, 0.8}, {0.3, 0.4}});
    auto perm = make_measure({{0.3, 0.4}, {0.1, 0.2}, {0.6, 0.8}});
    CHECK(wasserstein_distance(mu, perm) <= 1e-12);
    CHECK(approx_equal(mu, perm));
}

TEST_CASE("pushforward applies the map in order") {
    auto mu = make_measure({{0.2}});
    auto id = pushforward(mu, [](const TorusPoint& p) { return p; });
    CHECK(id.particles[0][0] == mu.particles[0][0]);

    auto shifted = pushforward(mu, [](const TorusPoint& p) {
        return wrap(axpy(1.0, {0.3}, p.coords));
    });
    CHECK(shifted.particles[0][0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(wasserstein_distance(mu, shifted) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("pushforward lipschitz transfer") {
    UniformSampler rng(31);
    const double kappa = 0.5;
    // smooth periodic map with |f'| <= kappa everywhere on the torus
    constexpr double two_pi = 6.283185307179586;
    auto f = [&](const TorusPoint& p) {
        Vec out(p.dim());
        for (std::size_t i = 0; i < p.dim(); ++i)
            out[i] = 0.3 + kappa / two_pi * std::sin(two_pi * p[i]);
        return wrap(out);
    };
    for (int rep = 0; rep < 20; ++rep) {
        auto mu = random_measure(rng, 6, 1);
        auto nu = random_measure(rng, 6, 1);
        double w_before = wasserstein_distance(mu, nu);
        double w_after = wasserstein_distance(pushforward(mu, f), pushforward(nu, f));
        CHECK(w_after <= kappa * w_before + 1e-9);
    }
}

TEST_CASE("geodesic interpolation has constant speed") {
    auto mu = make_measure({{0.0}, {0.5}});
    auto nu = make_measure({{0.1}, {0.6}});
    auto plan = wasserstein(mu, nu);
    CHECK(approx_equal(geodesic_interpolate(plan, 0.0), mu));
    CHECK(approx_equal(geodesic_interpolate(plan, 1.0), nu));

    auto mid = geodesic_interpolate(plan, 0.5);
    CHECK(wasserstein_distance(mu, mid) == doctest::Approx(0.05).epsilon(1e-10));

    const double w = plan.distance();
    std::vector<double> taus{0.0, 0.25, 0.5, 0.75, 1.0};
    for (double t1 : taus)
        for (double t2 : taus) {
            double got = wasserstein_distance(geodesic_interpolate(plan, t1),
                                              geodesic_interpolate(plan, t2));
            CHECK(got == doctest::Approx(std::abs(t2 - t1) * w).epsilon(1e-10));
        }
    CHECK_THROWS_AS(geodesic_interpolate(plan, 1.5), std::invalid_argument);
}

TEST_CASE("displacement velocity norm equals the distance") {
    auto mu = make_measure({{0.2}});
    auto nu = make_measure({{0.4}});
    auto plan = wasserstein(mu, nu);
    auto v = displacement_velocity(plan, 0.0);
    CHECK(v[0][0] == doctest::Approx(0.2).epsilon(1e-14));

    auto self = wasserstein(mu, mu);
    for (const auto& w : displacement_velocity(self, 0.3)) CHECK(norm2(w) == 0.0);

    auto mu2 = make_measure({{0.0}, {0.5}});
    auto nu2 = make_measure({{0.1}, {0.6}});
    auto plan2 = wasserstein(mu2, nu2);
    for (double tau : {0.0, 0.5, 1.0}) {
        auto vel = displacement_velocity(plan2, tau);
        double l2 = 0;
        for (const auto& w : vel) l2 += dot(w, w);
        l2 = std::sqrt(l2 / static_cast<double>(vel.size()));
        CHECK(l2 == doctest::Approx(plan2.distance()).epsilon(1e-12));
    }
}

TEST_CASE("particles csv round trip") {
    auto mu = make_measure({{0.125, 0.75}, {0.5, 0.0625}});
    std::stringstream ss;
    write_particles_csv(ss, mu);
    auto back = read_particles_csv(ss);
    REQUIRE(back.size() == mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j)
        CHECK(torus_dist(back.particles[j], mu.particles[j]) == 0.0);
    std::string header;
    std::stringstream ss2;
    write_particles_csv(ss2, mu);
    std::getline(ss2, header);
    CHECK(header == "x0,x1");
}
