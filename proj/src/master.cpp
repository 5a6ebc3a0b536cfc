#include "mfgtorus/master.hpp"

#include <cmath>

namespace mfg {

namespace {

Eigen::VectorXd to_eigen(const Vec& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

Vec from_eigen(const Eigen::VectorXd& v) {
    Vec out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v(i);
    return out;
}

// Shared state for one (s, q, mu) evaluation: the solved field with q as its
// single query, the inverse labels xi_k = X_{t_k}(q) for 0 <= k <= ks, and
// the characteristics through them (V(t_k, q) = their Sigma^2 at k).
struct MasterContext {
    const CoefficientTriple& triple;
    SolverConfig cfg;
    const EmpiricalMeasure& mu;
    TorusPoint q;
    CharacteristicField field;
    int ks;
    std::vector<TorusPoint> xi;
    std::vector<PointTrajectory> xi_traj;
    std::size_t solves = 0;

    MasterContext(const CoefficientTriple& triple_, const SolverConfig& cfg_,
                  const EmpiricalMeasure& mu_, const TorusPoint& q_)
        : triple(triple_), cfg(cfg_), mu(mu_), q(q_),
          field(solve(triple_, cfg_, mu_, {q_})), ks(field.s_index()) {
        ++solves;
        xi.resize(static_cast<std::size_t>(ks) + 1);
        xi_traj.resize(static_cast<std::size_t>(ks) + 1);
        LabelMarcher marcher(field, triple, q);
        for (int k = ks; k >= 0; --k) {
            xi_traj[k] = marcher.at(k);
            xi[k] = marcher.label();
        }
    }

    const Vec& vee(int k) const { return xi_traj[k].sigma2[k]; }

    double u() const {
        std::vector<double> integrand(static_cast<std::size_t>(ks) + 1);
        for (int k = 0; k <= ks; ++k)
            integrand[k] = triple.hamiltonian.value(q.coords, vee(k)) +
                           triple.running_cost(q.coords, field.measure_at(k));
        double acc = 0.0;
        const double dt = cfg.dt();
        for (int k = 1; k <= ks; ++k) acc += 0.5 * dt * (integrand[k - 1] + integrand[k]);
        return triple.initial_cost(q.coords, field.measure_at(0)) - acc;
    }

    // u at a different spatial point against the same field
    double u_at(const TorusPoint& q2) {
        std::vector<double> integrand(static_cast<std::size_t>(ks) + 1);
        LabelMarcher marcher(field, triple, q2);
        for (int k = ks; k >= 0; --k) {
            integrand[k] = triple.hamiltonian.value(q2.coords, marcher.at(k).sigma2[k]) +
                           triple.running_cost(q2.coords, field.measure_at(k));
        }
        double acc = 0.0;
        const double dt = cfg.dt();
        for (int k = 1; k <= ks; ++k) acc += 0.5 * dt * (integrand[k - 1] + integrand[k]);
        return triple.initial_cost(q2.coords, field.measure_at(0)) - acc;
    }
};

// Per-particle pathwise data shared by upsilon and the master residual.
struct PathwiseTable {
    // [j][k]: N_F and nabla_mu_H on the grid restricted to [0, s]; N_g at 0
    std::vector<std::vector<Vec>> N_F;
    std::vector<std::vector<Vec>> nabla_mu_H;
    std::vector<Vec> N_g;
    std::vector<SensitivityField> sens;  // per particle j
    std::size_t solves = 0;
};

PathwiseTable build_pathwise(MasterContext& ctx) {
    const auto& triple = ctx.triple;
    const std::size_t n = ctx.mu.size();
    const std::size_t d = ctx.mu.dim();
    const int ks = ctx.ks;
    const double h = ctx.cfg.fd_step_q;

    // grad_q Sigma at the labels xi_k and at the particles
    std::vector<Mat> jac1_xi(static_cast<std::size_t>(ks) + 1), jac2_xi(jac1_xi.size());
    for (int k = 0; k <= ks; ++k) {
        jac1_xi[k] = sigma1_jacobians(ctx.field, triple, ctx.xi[k], h)[k];
        jac2_xi[k] = sigma2_jacobians(ctx.field, triple, ctx.xi[k], h)[k];
    }
    std::vector<std::vector<Mat>> jac1_particles(n);
    for (std::size_t r = 0; r < n; ++r)
        jac1_particles[r] = sigma1_jacobians(ctx.field, triple, ctx.mu.particles[r], h);

    // measure gradients of the couplings at the pushed atoms
    // grad_mu_F[k][r] = grad_mu F(q, sigma_k)(Sigma^1_k(x_r))
    std::vector<std::vector<Eigen::VectorXd>> grad_mu_F(static_cast<std::size_t>(ks) + 1,
                                                        std::vector<Eigen::VectorXd>(n));
    std::vector<Eigen::VectorXd> grad_mu_g(n);
    for (int k = 0; k <= ks; ++k)
        for (std::size_t r = 0; r < n; ++r)
            grad_mu_F[k][r] =
                to_eigen(triple.running_cost.grad_mu(ctx.q.coords, ctx.field.measure_at(k), r));
    for (std::size_t r = 0; r < n; ++r)
        grad_mu_g[r] =
            to_eigen(triple.initial_cost.grad_mu(ctx.q.coords, ctx.field.measure_at(0), r));

    PathwiseTable tab;
    tab.N_F.assign(n, std::vector<Vec>(static_cast<std::size_t>(ks) + 1));
    tab.nabla_mu_H.assign(n, std::vector<Vec>(static_cast<std::size_t>(ks) + 1));
    tab.N_g.resize(n);
    tab.sens.resize(n);

    // sensitivities of Sigma for each particle, evaluated at the particles
    // (passively at j) and at the labels xi_k
    std::vector<TorusPoint> extra(ctx.xi.begin(), ctx.xi.end());
    for (std::size_t j = 0; j < n; ++j) {
        tab.sens[j] = particle_sensitivity_field(triple, ctx.cfg, ctx.mu, j, extra);
        tab.solves += 4 * d;  // two solves per coordinate and sign

        for (int k = 0; k <= ks; ++k) {
            // N_F(t_k)(x_j): label motion + measure-parameter motion
            Eigen::VectorXd nf =
                jac1_particles[j][k].transpose() * grad_mu_F[k][j];
            std::vector<std::vector<double>> zeta_terms(d, std::vector<double>(n));
            for (std::size_t r = 0; r < n; ++r) {
                Eigen::VectorXd t =
                    tab.sens[j].at[k][r].dsigma1.transpose() * grad_mu_F[k][r];
                for (std::size_t a = 0; a < d; ++a)
                    zeta_terms[a][r] = t(static_cast<Eigen::Index>(a));
            }
            Vec nf_out(d);
            for (std::size_t a = 0; a < d; ++a)
                nf_out[a] = nf(static_cast<Eigen::Index>(a)) +
                            perm_invariant_sum(std::move(zeta_terms[a])) / static_cast<double>(n);
            tab.N_F[j][k] = std::move(nf_out);

            // nabla_mu H(q, V(t_k,q))(x_j) through the inverse label
            const auto& s_xi = tab.sens[j].at[k][n + static_cast<std::size_t>(k)];
            Mat ndX = -jac1_xi[k].partialPivLu().solve(s_xi.dsigma1);
            Mat ndV = s_xi.dsigma2 + jac2_xi[k] * ndX;
            Eigen::VectorXd gp = to_eigen(triple.hamiltonian.grad_p(ctx.q.coords, ctx.vee(k)));
            tab.nabla_mu_H[j][k] = from_eigen(ndV.transpose() * gp);
        }
        // N_g at t = 0
        Eigen::VectorXd ng = jac1_particles[j][0].transpose() * grad_mu_g[j];
        std::vector<std::vector<double>> zeta_terms(d, std::vector<double>(n));
        for (std::size_t r = 0; r < n; ++r) {
            Eigen::VectorXd t = tab.sens[j].at[0][r].dsigma1.transpose() * grad_mu_g[r];
            for (std::size_t a = 0; a < d; ++a) zeta_terms[a][r] = t(static_cast<Eigen::Index>(a));
        }
        Vec ng_out(d);
        for (std::size_t a = 0; a < d; ++a)
            ng_out[a] = ng(static_cast<Eigen::Index>(a)) +
                        perm_invariant_sum(std::move(zeta_terms[a])) / static_cast<double>(n);
        tab.N_g[j] = std::move(ng_out);
    }
    return tab;
}

Vec upsilon_from_table(const PathwiseTable& tab, const MasterContext& ctx, std::size_t j) {
    const std::size_t d = ctx.mu.dim();
    const double dt = ctx.cfg.dt();
    Vec out = tab.N_g[j];
    for (int k = 1; k <= ctx.ks; ++k)
        for (std::size_t a = 0; a < d; ++a)
            out[a] -= 0.5 * dt *
                      (tab.nabla_mu_H[j][k - 1][a] + tab.N_F[j][k - 1][a] +
                       tab.nabla_mu_H[j][k][a] + tab.N_F[j][k][a]);
    return out;
}

double partial_s_from(const CoefficientTriple& triple, const SolverConfig& cfg,
                      const EmpiricalMeasure& mu, const TorusPoint& q, std::size_t* solves) {
    cfg.validate();
    const int ks = cfg.s_index();
    const double dt = cfg.dt();
    auto u_at_s = [&](int k) {
        SolverConfig c = cfg;
        c.s = k * dt;
        MasterContext ctx(triple, c, mu, q);
        if (solves) *solves += ctx.solves;
        return ctx.u();
    };
    if (ks - 1 >= 0 && ks + 1 <= cfg.K) return (u_at_s(ks + 1) - u_at_s(ks - 1)) / (2.0 * dt);
    if (ks + 1 > cfg.K) {
        if (ks - 2 < 0) throw std::invalid_argument("partial_s_u: grid too short");
        return (3.0 * u_at_s(ks) - 4.0 * u_at_s(ks - 1) + u_at_s(ks - 2)) / (2.0 * dt);
    }
    if (ks + 2 > cfg.K) throw std::invalid_argument("partial_s_u: grid too short");
    return (-3.0 * u_at_s(ks) + 4.0 * u_at_s(ks + 1) - u_at_s(ks + 2)) / (2.0 * dt);
}

double residual_from(const MasterContext& ctx, const PathwiseTable& tab, double dsu) {
    const std::size_t n = ctx.mu.size();
    std::vector<double> terms(n);
    for (std::size_t j = 0; j < n; ++j) {
        Vec ups = upsilon_from_table(tab, ctx, j);
        const Vec& grad_u_at_xj = ctx.field.sigma2[ctx.ks][j];
        Vec gp = ctx.triple.hamiltonian.grad_p(ctx.mu.particles[j].coords, grad_u_at_xj);
        terms[j] = dot(ups, gp);
    }
    double transport = perm_invariant_sum(std::move(terms)) / static_cast<double>(n);
    const Vec& grad_u_at_q = ctx.field.sigma2[ctx.ks][ctx.field.query_index(0)];
    return dsu + transport + ctx.triple.hamiltonian.value(ctx.q.coords, grad_u_at_q) +
           ctx.triple.running_cost(ctx.q.coords, ctx.mu);
}

}  // namespace

double evaluate_u(const CoefficientTriple& triple, const SolverConfig& cfg,
                  const EmpiricalMeasure& mu, const TorusPoint& q) {
    MasterContext ctx(triple, cfg, mu, q);
    return ctx.u();
}

Vec grad_q_u(const CoefficientTriple& triple, const SolverConfig& cfg, const EmpiricalMeasure& mu,
             const TorusPoint& q, double* fd_error) {
    MasterContext ctx(triple, cfg, mu, q);
    Vec primary = ctx.field.sigma2[ctx.ks][ctx.field.query_index(0)];
    if (fd_error) {
        const double h = cfg.fd_step_q;
        double worst = 0.0;
        for (std::size_t a = 0; a < q.dim(); ++a) {
            Vec cp = q.coords, cm = q.coords;
            cp[a] += h;
            cm[a] -= h;
            double fd = (ctx.u_at(wrap(cp)) - ctx.u_at(wrap(cm))) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - primary[a]));
        }
        *fd_error = worst;
    }
    return primary;
}

PathwiseGradientSample pathwise_gradients(const CoefficientTriple& triple, const SolverConfig& cfg,
                                          const EmpiricalMeasure& mu, const TorusPoint& q, int k,
                                          std::size_t j) {
    MasterContext ctx(triple, cfg, mu, q);
    if (k < 0 || k > ctx.ks) throw std::invalid_argument("pathwise_gradients: k outside [0, s]");
    auto tab = build_pathwise(ctx);
    PathwiseGradientSample sample;
    sample.k = k;
    sample.j = j;
    sample.N_F = tab.N_F[j][k];
    sample.N_g = tab.N_g[j];
    sample.nabla_mu_H = tab.nabla_mu_H[j][k];
    sample.sigma_sensitivities = tab.sens[j].at[k][mu.size() + static_cast<std::size_t>(k)];
    return sample;
}

Vec upsilon(const CoefficientTriple& triple, const SolverConfig& cfg, const EmpiricalMeasure& mu,
            const TorusPoint& q, std::size_t j) {
    MasterContext ctx(triple, cfg, mu, q);
    auto tab = build_pathwise(ctx);
    return upsilon_from_table(tab, ctx, j);
}

Vec grad_mu_u_fd(const CoefficientTriple& triple, const SolverConfig& cfg,
                 const EmpiricalMeasure& mu, const TorusPoint& q, std::size_t j) {
    const double h = cfg.fd_step_x;
    const double n = static_cast<double>(mu.size());
    Vec out(mu.dim());
    for (std::size_t a = 0; a < mu.dim(); ++a) {
        EmpiricalMeasure plus = mu, minus = mu;
        Vec cp = mu.particles[j].coords, cm = cp;
        cp[a] += h;
        cm[a] -= h;
        plus.particles[j] = wrap(cp);
        minus.particles[j] = wrap(cm);
        out[a] = n * (evaluate_u(triple, cfg, plus, q) - evaluate_u(triple, cfg, minus, q)) /
                 (2.0 * h);
    }
    return out;
}

double partial_s_u(const CoefficientTriple& triple, const SolverConfig& cfg,
                   const EmpiricalMeasure& mu, const TorusPoint& q) {
    return partial_s_from(triple, cfg, mu, q, nullptr);
}

double master_residual(const CoefficientTriple& triple, const SolverConfig& cfg,
                       const EmpiricalMeasure& mu, const TorusPoint& q) {
    MasterContext ctx(triple, cfg, mu, q);
    auto tab = build_pathwise(ctx);
    double dsu = partial_s_from(triple, cfg, mu, q, nullptr);
    return residual_from(ctx, tab, dsu);
}

MasterEvaluation evaluate_master(const CoefficientTriple& triple, const SolverConfig& cfg,
                                 const EmpiricalMeasure& mu, const TorusPoint& q,
                                 bool with_fd_cross_check) {
    MasterContext ctx(triple, cfg, mu, q);
    auto tab = build_pathwise(ctx);

    MasterEvaluation ev;
    ev.s = cfg.s;
    ev.q = q.coords;
    ev.u = ctx.u();
    ev.grad_q_u = ctx.field.sigma2[ctx.ks][ctx.field.query_index(0)];
    ev.grad_mu_u.resize(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) ev.grad_mu_u[j] = upsilon_from_table(tab, ctx, j);
    std::size_t extra_solves = 0;
    ev.partial_s_u = partial_s_from(triple, cfg, mu, q, &extra_solves);
    ev.residual = residual_from(ctx, tab, ev.partial_s_u);
    if (with_fd_cross_check) {
        const double h = cfg.fd_step_q;
        double worst = 0.0;
        for (std::size_t a = 0; a < q.dim(); ++a) {
            Vec cp = q.coords, cm = q.coords;
            cp[a] += h;
            cm[a] -= h;
            worst = std::max(worst, std::abs((ctx.u_at(wrap(cp)) - ctx.u_at(wrap(cm))) / (2.0 * h) -
                                             ev.grad_q_u[a]));
        }
        ev.grad_q_fd_error = worst;
    }
    ev.solves_performed = ctx.solves + tab.solves + extra_solves;
    return ev;
}

}  // namespace mfg
