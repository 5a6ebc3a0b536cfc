#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "mfgtorus/torus.hpp"

namespace mfg {

// n equally weighted particles on the torus; the computational stand-in for a
// probability measure. Two measures that differ by a particle permutation
// represent the same measure (see approx_equal).
struct EmpiricalMeasure {
    std::vector<TorusPoint> particles;

    std::size_t size() const { return particles.size(); }
    std::size_t dim() const { return particles.empty() ? 0 : particles.front().dim(); }
};

EmpiricalMeasure make_measure(const std::vector<Vec>& coords);

// Optimal assignment between two equal-size particle sets under squared torus
// distance. cost = (1/n) sum_j d(x_j, y_{p(j)})^2; distance() is the
// Wasserstein distance.
struct TransportPlan {
    EmpiricalMeasure source;
    EmpiricalMeasure target;
    std::vector<std::size_t> assignment;  // j -> index into target
    double cost = 0.0;

    double distance() const;
};

enum class AssignmentMethod {
    hungarian,    // O(n^3) shortest augmenting path
    brute_force,  // exhaustive over all n! permutations; n <= 8 only
};

TransportPlan wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          AssignmentMethod method = AssignmentMethod::hungarian);

// Wasserstein distance between mu and nu (convenience wrapper).
double wasserstein_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Permutation-invariant equality: optimal matching cost below tol.
bool approx_equal(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double tol = 1e-12);

// Apply f to every particle, order preserved.
EmpiricalMeasure pushforward(const EmpiricalMeasure& mu,
                             const std::function<TorusPoint(const TorusPoint&)>& f);

// Displacement interpolation along the plan: particle j moves along the
// minimal displacement towards its assigned target. tau in [0,1].
EmpiricalMeasure geodesic_interpolate(const TransportPlan& plan, double tau);

// Velocity of the displacement interpolation at parameter tau (constant in
// tau for these geodesics); its L2(mu^tau) norm equals the plan distance.
std::vector<Vec> displacement_velocity(const TransportPlan& plan, double tau);

// CSV round trip: one row per particle, d columns, header x0,...,x{d-1}.
void write_particles_csv(std::ostream& os, const EmpiricalMeasure& mu);
EmpiricalMeasure read_particles_csv(std::istream& is);

}  // namespace mfg
