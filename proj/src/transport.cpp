#include "mfgtorus/transport.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mfg {

EmpiricalMeasure make_measure(const std::vector<Vec>& coords) {
    if (coords.empty()) throw std::invalid_argument("make_measure: need at least one particle");
    EmpiricalMeasure mu;
    mu.particles.reserve(coords.size());
    for (const auto& c : coords) mu.particles.push_back(wrap(c));
    for (const auto& p : mu.particles)
        if (p.dim() != mu.particles.front().dim())
            throw std::invalid_argument("make_measure: mixed dimensions");
    return mu;
}

double TransportPlan::distance() const { return std::sqrt(std::max(cost, 0.0)); }

namespace {

std::vector<std::vector<double>> cost_matrix(const EmpiricalMeasure& mu,
                                             const EmpiricalMeasure& nu) {
    const std::size_t n = mu.size();
    std::vector<std::vector<double>> c(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double d = torus_dist(mu.particles[i], nu.particles[j]);
            c[i][j] = d * d;
        }
    return c;
}

// O(n^3) shortest augmenting path assignment with dual potentials; internal
// indexing is 1-based with column 0 as the virtual start.
std::vector<std::size_t> solve_hungarian(const std::vector<std::vector<double>>& a) {
    const int n = static_cast<int>(a.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);  // p[j]: row matched to column j
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) assignment[static_cast<std::size_t>(p[j] - 1)] =
            static_cast<std::size_t>(j - 1);
    return assignment;
}

std::vector<std::size_t> solve_brute_force(const std::vector<std::vector<double>>& c) {
    const std::size_t n = c.size();
    if (n > 8) throw std::invalid_argument("brute_force assignment: n must be <= 8");
    std::vector<std::size_t> perm(n), best(n);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c[i][perm[i]];
        if (s < best_cost) {
            best_cost = s;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TransportPlan wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          AssignmentMethod method) {
    if (mu.size() != nu.size())
        throw std::invalid_argument("wasserstein: unequal particle counts are unsupported");
    if (mu.dim() != nu.dim()) throw std::invalid_argument("wasserstein: dimension mismatch");
    auto c = cost_matrix(mu, nu);
    TransportPlan plan;
    plan.source = mu;
    plan.target = nu;
    plan.assignment =
        (method == AssignmentMethod::hungarian) ? solve_hungarian(c) : solve_brute_force(c);
    std::vector<double> terms(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) terms[j] = c[j][plan.assignment[j]];
    plan.cost = perm_invariant_sum(std::move(terms)) / static_cast<double>(mu.size());
    return plan;
}

double wasserstein_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    return wasserstein(mu, nu).distance();
}

bool approx_equal(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double tol) {
    if (mu.size() != nu.size() || mu.dim() != nu.dim()) return false;
    return wasserstein(mu, nu).cost <= tol;
}

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu,
                             const std::function<TorusPoint(const TorusPoint&)>& f) {
    EmpiricalMeasure out;
    out.particles.reserve(mu.size());
    for (const auto& p : mu.particles) out.particles.push_back(f(p));
    return out;
}

EmpiricalMeasure geodesic_interpolate(const TransportPlan& plan, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::invalid_argument("geodesic_interpolate: tau outside [0,1]");
    EmpiricalMeasure out;
    out.particles.reserve(plan.source.size());
    for (std::size_t j = 0; j < plan.source.size(); ++j) {
        const auto& x = plan.source.particles[j];
        const auto& y = plan.target.particles[plan.assignment[j]];
        auto w = min_displacement(x, y);
        out.particles.push_back(wrap(axpy(tau, w.components, x.coords)));
    }
    return out;
}

std::vector<Vec> displacement_velocity(const TransportPlan& plan, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::invalid_argument("displacement_velocity: tau outside [0,1]");
    std::vector<Vec> v;
    v.reserve(plan.source.size());
    for (std::size_t j = 0; j < plan.source.size(); ++j) {
        const auto& x = plan.source.particles[j];
        const auto& y = plan.target.particles[plan.assignment[j]];
        v.push_back(min_displacement(x, y).components);
    }
    return v;
}

void write_particles_csv(std::ostream& os, const EmpiricalMeasure& mu) {
    const std::size_t d = mu.dim();
    for (std::size_t i = 0; i < d; ++i) os << (i ? "," : "") << "x" << i;
    os << "\n";
    os.precision(17);
    for (const auto& p : mu.particles) {
        for (std::size_t i = 0; i < d; ++i) os << (i ? "," : "") << p[i];
        os << "\n";
    }
}

EmpiricalMeasure read_particles_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("particles csv: empty file");
    std::vector<Vec> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Vec row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return make_measure(rows);
}

}  // namespace mfg
