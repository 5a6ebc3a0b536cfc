#include "mfgtorus/mfg_system.hpp"

#include <cmath>
#include <numbers>

namespace mfg {

QueryLattice QueryLattice::uniform(std::size_t d, std::size_t per_axis) {
    if (d < 1 || per_axis < 1) throw std::invalid_argument("QueryLattice: bad parameters");
    QueryLattice lat;
    lat.d = d;
    lat.per_axis = per_axis;
    std::size_t total = 1;
    for (std::size_t a = 0; a < d; ++a) total *= per_axis;
    lat.points.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        Vec c(d);
        std::size_t rem = idx;
        for (std::size_t a = 0; a < d; ++a) {
            c[a] = static_cast<double>(rem % per_axis) / static_cast<double>(per_axis);
            rem /= per_axis;
        }
        lat.points.push_back(wrap(c));
    }
    return lat;
}

std::size_t QueryLattice::neighbor(std::size_t idx, std::size_t axis, long offset) const {
    std::size_t stride = 1;
    for (std::size_t a = 0; a < axis; ++a) stride *= per_axis;
    long coord = static_cast<long>((idx / stride) % per_axis);
    long m = static_cast<long>(per_axis);
    long wrapped = ((coord + offset) % m + m) % m;
    return idx + static_cast<std::size_t>(wrapped - coord) * stride;
}

std::vector<double> value_along(const PointTrajectory& traj, const CharacteristicField& field,
                                const CoefficientTriple& triple) {
    const int K = field.K();
    const double dt = field.dt();
    const std::size_t d = field.setup.mu.dim();
    std::vector<double> rhs(static_cast<std::size_t>(K) + 1);
    double gp[8];
    for (int k = 0; k <= K; ++k) {
        const Vec& q = traj.sigma1[k].coords;
        const Vec& p = traj.sigma2[k];
        if (triple.hamiltonian.grad_p_raw)
            triple.hamiltonian.grad_p_raw(q.data(), p.data(), d, gp);
        else {
            Vec g = triple.hamiltonian.grad_p(q, p);
            std::copy(g.begin(), g.end(), gp);
        }
        double pg = 0.0;
        for (std::size_t c = 0; c < d; ++c) pg += p[c] * gp[c];
        rhs[k] = pg - triple.hamiltonian.value(q, p) -
                 triple.running_cost(q, field.measure_at(k));
    }
    std::vector<double> z(static_cast<std::size_t>(K) + 1);
    z[0] = triple.initial_cost(traj.sigma1[0].coords, field.measure_at(0));
    for (int k = 1; k <= K; ++k) z[k] = z[k - 1] + 0.5 * dt * (rhs[k - 1] + rhs[k]);
    return z;
}

MfgSolution build_solution(const CharacteristicField& field, const CoefficientTriple& triple,
                           const QueryLattice& lattice) {
    if (field.setup.queries.size() != lattice.size())
        throw std::invalid_argument("build_solution: field queries must be the lattice points");
    MfgSolution sol;
    sol.field = field;
    sol.lattice = lattice;
    const int K = field.K();
    const int ks = field.s_index();
    const std::size_t n = field.n_particles();

    sol.z.assign(static_cast<std::size_t>(K) + 1, std::vector<double>(field.n_points()));
    for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
        PointTrajectory traj;
        traj.sigma1.resize(static_cast<std::size_t>(K) + 1);
        traj.sigma2.resize(static_cast<std::size_t>(K) + 1);
        for (int k = 0; k <= K; ++k) {
            traj.sigma1[k] = field.sigma1[k][pt];
            traj.sigma2[k] = field.sigma2[k][pt];
        }
        auto z = value_along(traj, field, triple);
        for (int k = 0; k <= K; ++k) sol.z[k][pt] = z[k];
    }

    sol.velocity.assign(static_cast<std::size_t>(K) + 1, std::vector<Vec>(n));
    for (int k = 0; k <= K; ++k)
        for (std::size_t j = 0; j < n; ++j)
            sol.velocity[k][j] =
                triple.hamiltonian.grad_p(field.sigma1[k][j].coords, field.sigma2[k][j]);

    // U(t_k, q_j) = z(t_k, X_{t_k}(q_j)); march away from k = s where X = id,
    // reusing the frozen characteristic between slices.
    sol.U.assign(static_cast<std::size_t>(K) + 1, std::vector<double>(lattice.size()));
    for (std::size_t j = 0; j < lattice.size(); ++j) {
        const std::size_t row = field.query_index(j);
        sol.U[ks][j] = sol.z[ks][row];  // X_s = id
        if (ks + 1 <= K) {
            LabelMarcher marcher(field, triple, lattice.points[j]);
            for (int k = ks + 1; k <= K; ++k)
                sol.U[k][j] = value_along(marcher.at(k), field, triple)[k];
        }
        if (ks - 1 >= 0) {
            LabelMarcher marcher(field, triple, lattice.points[j]);
            for (int k = ks - 1; k >= 0; --k)
                sol.U[k][j] = value_along(marcher.at(k), field, triple)[k];
        }
    }
    return sol;
}

double evaluate_U(const MfgSolution& sol, const CoefficientTriple& triple, int k,
                  const TorusPoint& q, const TorusPoint* label_guess) {
    auto inv = invert_flow_with_trajectory(sol.field, triple, k, q, label_guess);
    return value_along(inv.trajectory, sol.field, triple)[k];
}

double hjb_residual(const MfgSolution& sol, const CoefficientTriple& triple) {
    const int K = sol.field.K();
    const double dt = sol.field.dt();
    const double h = sol.lattice.spacing();
    const std::size_t d = sol.lattice.d;
    double sup = 0.0;
    for (int k = 0; k <= K; ++k) {
        for (std::size_t j = 0; j < sol.lattice.size(); ++j) {
            double ut;
            if (k == 0)
                ut = (-3.0 * sol.U[0][j] + 4.0 * sol.U[1][j] - sol.U[2][j]) / (2.0 * dt);
            else if (k == K)
                ut = (3.0 * sol.U[K][j] - 4.0 * sol.U[K - 1][j] + sol.U[K - 2][j]) / (2.0 * dt);
            else
                ut = (sol.U[k + 1][j] - sol.U[k - 1][j]) / (2.0 * dt);
            Vec grad(d);
            for (std::size_t a = 0; a < d; ++a) {
                std::size_t jp = sol.lattice.neighbor(j, a, +1);
                std::size_t jm = sol.lattice.neighbor(j, a, -1);
                grad[a] = (sol.U[k][jp] - sol.U[k][jm]) / (2.0 * h);
            }
            const Vec& q = sol.lattice.points[j].coords;
            double resid = ut + triple.hamiltonian.value(q, grad) +
                           triple.running_cost(q, sol.field.measure_at(k));
            sup = std::max(sup, std::abs(resid));
        }
    }
    return sup;
}

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

struct TestFunction {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;
};

std::vector<TestFunction> trig_basis(std::size_t d, std::size_t max_freq) {
    std::vector<TestFunction> fns;
    fns.push_back({[](const Vec&) { return 1.0; },
                   [d](const Vec&) { return Vec(d, 0.0); }});
    // wave vectors in the canonical half-space (first nonzero component > 0)
    std::vector<Vec> waves;
    long m = static_cast<long>(max_freq);
    std::vector<long> k(d, -m);
    while (true) {
        bool nonzero = false, canonical = false;
        for (std::size_t a = 0; a < d; ++a) {
            if (k[a] != 0) {
                nonzero = true;
                canonical = k[a] > 0;
                break;
            }
        }
        if (nonzero && canonical) {
            Vec w(d);
            for (std::size_t a = 0; a < d; ++a) w[a] = static_cast<double>(k[a]);
            waves.push_back(w);
        }
        std::size_t a = 0;
        while (a < d && k[a] == m) k[a++] = -m;
        if (a == d) break;
        ++k[a];
    }
    for (const auto& w : waves) {
        fns.push_back({[w](const Vec& x) { return std::sin(two_pi * dot(w, x)); },
                       [w](const Vec& x) {
                           double c = two_pi * std::cos(two_pi * dot(w, x));
                           return scaled(w, c);
                       }});
        fns.push_back({[w](const Vec& x) { return std::cos(two_pi * dot(w, x)); },
                       [w](const Vec& x) {
                           double c = -two_pi * std::sin(two_pi * dot(w, x));
                           return scaled(w, c);
                       }});
    }
    return fns;
}

}  // namespace

double continuity_residual(const MfgSolution& sol, std::size_t max_freq) {
    const int K = sol.field.K();
    const double dt = sol.field.dt();
    const std::size_t n = sol.field.n_particles();
    auto basis = trig_basis(sol.lattice.d, max_freq);
    double sup = 0.0;
    for (const auto& fn : basis) {
        std::vector<double> moment(static_cast<std::size_t>(K) + 1);
        for (int k = 0; k <= K; ++k) {
            std::vector<double> terms(n);
            for (std::size_t j = 0; j < n; ++j)
                terms[j] = fn.value(sol.field.sigma1[k][j].coords);
            moment[k] = perm_invariant_sum(std::move(terms)) / static_cast<double>(n);
        }
        for (int k = 1; k < K; ++k) {
            double dmdt = (moment[k + 1] - moment[k - 1]) / (2.0 * dt);
            std::vector<double> terms(n);
            for (std::size_t j = 0; j < n; ++j)
                terms[j] = dot(fn.grad(sol.field.sigma1[k][j].coords), sol.velocity[k][j]);
            double flux = perm_invariant_sum(std::move(terms)) / static_cast<double>(n);
            sup = std::max(sup, std::abs(dmdt - flux));
        }
    }
    return sup;
}

double gradient_identity_check(const MfgSolution& sol, const CoefficientTriple& triple,
                               std::size_t time_slices, double h) {
    const int K = sol.field.K();
    if (h <= 0.0) h = 0.25 * sol.lattice.spacing();
    const std::size_t d = sol.lattice.d;
    const int stride = std::max(1, K / static_cast<int>(std::max<std::size_t>(time_slices, 1)));
    // probe a deterministic subset of the lattice, at most 64 points
    const std::size_t jstride = std::max<std::size_t>(1, sol.lattice.size() / 64);
    double sup = 0.0;
    for (int k = 0; k <= K; k += stride) {
        for (std::size_t j = 0; j < sol.lattice.size(); j += jstride) {
            const std::size_t row = sol.field.query_index(j);
            const TorusPoint& y = sol.field.sigma1[k][row];  // Sigma^1_t(q_j)
            const TorusPoint& label = sol.lattice.points[j];
            double err_sq = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                Vec cp = y.coords, cm = y.coords;
                cp[a] += h;
                cm[a] -= h;
                double up = evaluate_U(sol, triple, k, wrap(cp), &label);
                double um = evaluate_U(sol, triple, k, wrap(cm), &label);
                double diff = (up - um) / (2.0 * h) - sol.field.sigma2[k][row][a];
                err_sq += diff * diff;
            }
            sup = std::max(sup, std::sqrt(err_sq));
        }
    }
    return sup;
}

double symmetry_check(const CharacteristicField& field, const CoefficientTriple& triple,
                      std::size_t time_slices, double h) {
    const std::size_t d = field.setup.mu.dim();
    if (d == 1) return 0.0;
    const int K = field.K();
    const int stride = std::max(1, K / static_cast<int>(std::max<std::size_t>(time_slices, 1)));
    const std::size_t jstride = std::max<std::size_t>(1, field.setup.queries.size() / 32);
    double sup = 0.0;
    for (int k = 0; k <= K; k += stride) {
        for (std::size_t jq = 0; jq < field.setup.queries.size(); jq += jstride) {
            const auto& q = field.setup.queries[jq];
            Mat jac(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            for (std::size_t a = 0; a < d; ++a) {
                Vec cp = q.coords, cm = q.coords;
                cp[a] += h;
                cm[a] -= h;
                Vec vp = vee_field(field, triple, k, wrap(cp));
                Vec vm = vee_field(field, triple, k, wrap(cm));
                for (std::size_t b = 0; b < d; ++b)
                    jac(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) =
                        (vp[b] - vm[b]) / (2.0 * h);
            }
            sup = std::max(sup, (jac - jac.transpose()).cwiseAbs().maxCoeff());
        }
    }
    return sup;
}

double FlowIdentityReport::worst() const {
    return std::max({composition_error, inverse_error, vee_error});
}

FlowIdentityReport flow_identity_check(const CoefficientTriple& triple, const SolverConfig& cfg,
                                       const EmpiricalMeasure& mu, int k0,
                                       const std::vector<TorusPoint>& queries) {
    auto field1 = solve(triple, cfg, mu, queries);
    SolverConfig cfg2 = cfg;
    cfg2.s = field1.t(k0);
    auto field2 = solve(triple, cfg2, field1.measure_at(k0), queries);
    const int K = cfg.K;
    const int ks = field1.s_index();
    const std::size_t n = mu.size();

    FlowIdentityReport rep;
    auto update_pair = [&](const TorusPoint& a1, const Vec& a2, const TorusPoint& b1,
                           const Vec& b2) {
        double s = torus_dist(a1, b1);
        double p = 0;
        for (std::size_t c = 0; c < a2.size(); ++c) p += (a2[c] - b2[c]) * (a2[c] - b2[c]);
        rep.composition_error =
            std::max(rep.composition_error, std::sqrt(s * s + p));
    };

    // (i) composition at the particles: field2's particle rows are the
    // characteristics through Sigma^1_{t0}[s,mu](x_j)
    for (int k = 0; k <= K; ++k)
        for (std::size_t j = 0; j < n; ++j)
            update_pair(field2.sigma1[k][j], field2.sigma2[k][j], field1.sigma1[k][j],
                        field1.sigma2[k][j]);
    // and at the queries, via frozen evaluation of field2 at the pushed point
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const std::size_t row = field1.query_index(i);
        auto traj = solve_frozen(field2, triple, field1.sigma1[k0][row]);
        for (int k = 0; k <= K; ++k)
            update_pair(traj.sigma1[k], traj.sigma2[k], field1.sigma1[k][row],
                        field1.sigma2[k][row]);
        // (ii) mutual inverses, read off at t = s where Sigma^1[s,mu] = id
        rep.inverse_error =
            std::max(rep.inverse_error, torus_dist(traj.sigma1[ks], queries[i]));
    }
    for (std::size_t j = 0; j < n; ++j)
        rep.inverse_error =
            std::max(rep.inverse_error, torus_dist(field2.sigma1[ks][j], mu.particles[j]));

    // (iii) the momentum-in-space fields of the two solves agree
    const int stride = std::max(1, K / 6);
    for (int k = 0; k <= K; k += stride) {
        for (const auto& q : queries) {
            Vec v1 = vee_field(field1, triple, k, q);
            Vec v2 = vee_field(field2, triple, k, q);
            double s = 0;
            for (std::size_t c = 0; c < v1.size(); ++c) s += (v1[c] - v2[c]) * (v1[c] - v2[c]);
            rep.vee_error = std::max(rep.vee_error, std::sqrt(s));
        }
    }
    return rep;
}

UniquenessReport uniqueness_consistency(const CoefficientTriple& triple, const SolverConfig& cfg,
                                        const EmpiricalMeasure& mu, const QueryLattice& lattice,
                                        const std::vector<int>& t0_indices) {
    auto field1 = solve(triple, cfg, mu, lattice.points);
    auto sol1 = build_solution(field1, triple, lattice);
    UniquenessReport rep;
    for (int k0 : t0_indices) {
        SolverConfig cfg2 = cfg;
        cfg2.s = field1.t(k0);
        auto field2 = solve(triple, cfg2, field1.measure_at(k0), lattice.points);
        auto sol2 = build_solution(field2, triple, lattice);
        for (int k = 0; k <= cfg.K; ++k) {
            for (std::size_t j = 0; j < lattice.size(); ++j)
                rep.sup_U_diff =
                    std::max(rep.sup_U_diff, std::abs(sol1.U[k][j] - sol2.U[k][j]));
            rep.max_wasserstein =
                std::max(rep.max_wasserstein,
                         wasserstein_distance(field1.measure_at(k), field2.measure_at(k)));
        }
    }
    return rep;
}

}  // namespace mfg
