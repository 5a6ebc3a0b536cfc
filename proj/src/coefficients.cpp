#include "mfgtorus/coefficients.hpp"

#include <cmath>
#include <numbers>

namespace mfg {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// permutation-invariant accumulation without heap allocation (n <= 64)
double sorted_sum(double* terms, std::size_t n) {
    for (std::size_t i = 1; i < n; ++i) {  // insertion sort
        double key = terms[i];
        std::size_t j = i;
        while (j > 0 && terms[j - 1] > key) {
            terms[j] = terms[j - 1];
            --j;
        }
        terms[j] = key;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += terms[i];
    return s;
}

constexpr std::size_t kMaxRawParticles = 64;

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
    Vec g(x.size());
    Vec xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

Vec displacement_to(const Vec& q, const TorusPoint& x) {
    // minimal representative of q - x
    return min_displacement(x, wrap(q)).components;
}

}  // namespace

Vec HamiltonianModel::grad_q(const Vec& q, const Vec& p) const {
    if (grad_q_fn) return grad_q_fn(q, p);
    return fd_gradient([&](const Vec& qq) { return value(qq, p); }, q, fd_step);
}

Vec HamiltonianModel::grad_p(const Vec& q, const Vec& p) const {
    if (grad_p_fn) return grad_p_fn(q, p);
    return fd_gradient([&](const Vec& pp) { return value(q, pp); }, p, fd_step);
}

Vec CouplingModel::grad_q(const Vec& q, const EmpiricalMeasure& mu) const {
    if (grad_q_fn) return grad_q_fn(q, mu);
    return fd_gradient([&](const Vec& qq) { return value(qq, mu); }, q, fd_step);
}

Vec CouplingModel::grad_mu(const Vec& q, const EmpiricalMeasure& mu, std::size_t r) const {
    if (grad_mu_fn) return grad_mu_fn(q, mu, r);
    if (!measure_dependent) return Vec(q.size(), 0.0);
    // n-scaled central difference moving atom r
    const double n = static_cast<double>(mu.size());
    Vec g(q.size());
    for (std::size_t a = 0; a < q.size(); ++a) {
        EmpiricalMeasure plus = mu, minus = mu;
        Vec cp = mu.particles[r].coords, cm = mu.particles[r].coords;
        cp[a] += fd_step;
        cm[a] -= fd_step;
        plus.particles[r] = wrap(cp);
        minus.particles[r] = wrap(cm);
        g[a] = n * (value(q, plus) - value(q, minus)) / (2.0 * fd_step);
    }
    return g;
}

Mat CouplingModel::grad_mu_grad_q(const Vec& q, const EmpiricalMeasure& mu, std::size_t r) const {
    const auto d = static_cast<Eigen::Index>(q.size());
    if (grad_mu_grad_q_fn) return grad_mu_grad_q_fn(q, mu, r);
    if (!measure_dependent) return Mat::Zero(d, d);
    const double n = static_cast<double>(mu.size());
    Mat m(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
        EmpiricalMeasure plus = mu, minus = mu;
        Vec cp = mu.particles[r].coords, cm = mu.particles[r].coords;
        cp[a] += fd_step;
        cm[a] -= fd_step;
        plus.particles[r] = wrap(cp);
        minus.particles[r] = wrap(cm);
        Vec gp = grad_q(q, plus), gm = grad_q(q, minus);
        for (Eigen::Index b = 0; b < d; ++b) m(a, b) = n * (gp[b] - gm[b]) / (2.0 * fd_step);
    }
    return m;
}

double CoefficientTriple::theta_floor(double kappa) {
    return std::max(1.0, 5.0 * std::sqrt(2.0) * kappa);
}

CoefficientTriple CoefficientTriple::make(HamiltonianModel H, CouplingModel F, CouplingModel g,
                                          double theta) {
    const double kappa = std::max(F.kappa, g.kappa);
    if (!(theta > theta_floor(kappa)))
        throw std::invalid_argument("CoefficientTriple: theta must exceed max{1, 5*sqrt(2)*kappa}");
    return CoefficientTriple{std::move(H), std::move(F), std::move(g), theta};
}

Kernel cosine_kernel(double amplitude) {
    const double c2 = two_pi * two_pi;
    Kernel k;
    k.value = [amplitude, c2](const Vec& y) {
        double s = 0.0;
        for (double yi : y) s += std::cos(two_pi * yi);
        return amplitude * s / c2;
    };
    k.grad = [amplitude](const Vec& y) {
        Vec g(y.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            g[i] = -amplitude * std::sin(two_pi * y[i]) / two_pi;
        return g;
    };
    k.hess = [amplitude](const Vec& y) {
        const auto d = static_cast<Eigen::Index>(y.size());
        Mat h = Mat::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) h(i, i) = -amplitude * std::cos(two_pi * y[i]);
        return h;
    };
    k.third = [amplitude](int i, int j, int l, const Vec& y) {
        if (i != j || j != l) return 0.0;
        return amplitude * two_pi * std::sin(two_pi * y[i]);
    };
    return k;
}

HamiltonianModel builtin_quadratic_hamiltonian() {
    HamiltonianModel h;
    h.value = [](const Vec&, const Vec& p) { return 0.5 * dot(p, p); };
    h.grad_q_fn = [](const Vec& q, const Vec&) { return Vec(q.size(), 0.0); };
    h.grad_p_fn = [](const Vec&, const Vec& p) { return p; };
    h.grad_q_raw = [](const double*, const double*, std::size_t d, double* out) {
        for (std::size_t c = 0; c < d; ++c) out[c] = 0.0;
    };
    h.grad_p_raw = [](const double*, const double* p, std::size_t d, double* out) {
        for (std::size_t c = 0; c < d; ++c) out[c] = p[c];
    };
    return h;
}

HamiltonianModel builtin_nonconvex_hamiltonian(double eps) {
    if (eps < 0) throw std::invalid_argument("builtin_nonconvex_hamiltonian: eps must be >= 0");
    auto sum = [](const Vec& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    };
    HamiltonianModel h;
    h.value = [eps, sum](const Vec& q, const Vec& p) {
        return 0.5 * dot(p, p) + eps * std::cos(two_pi * sum(p)) + eps * std::cos(two_pi * sum(q));
    };
    h.grad_q_fn = [eps, sum](const Vec& q, const Vec&) {
        double t = -eps * two_pi * std::sin(two_pi * sum(q));
        return Vec(q.size(), t);
    };
    h.grad_p_fn = [eps, sum](const Vec&, const Vec& p) {
        double t = -eps * two_pi * std::sin(two_pi * sum(p));
        Vec g = p;
        for (double& v : g) v += t;
        return g;
    };
    h.grad_q_raw = [eps](const double* q, const double*, std::size_t d, double* out) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += q[c];
        double t = -eps * two_pi * std::sin(two_pi * s);
        for (std::size_t c = 0; c < d; ++c) out[c] = t;
    };
    h.grad_p_raw = [eps](const double*, const double* p, std::size_t d, double* out) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += p[c];
        double t = -eps * two_pi * std::sin(two_pi * s);
        for (std::size_t c = 0; c < d; ++c) out[c] = p[c] + t;
    };
    return h;
}

CouplingModel builtin_convolution_coupling(Kernel phi, double kappa) {
    CouplingModel f;
    f.kappa = kappa;
    f.value = [phi](const Vec& q, const EmpiricalMeasure& mu) {
        std::vector<double> terms(mu.size());
        for (std::size_t j = 0; j < mu.size(); ++j)
            terms[j] = phi.value(displacement_to(q, mu.particles[j]));
        return perm_invariant_sum(std::move(terms)) / static_cast<double>(mu.size());
    };
    f.grad_q_fn = [phi](const Vec& q, const EmpiricalMeasure& mu) {
        const std::size_t d = q.size();
        Vec g(d, 0.0);
        std::vector<std::vector<double>> terms(d, std::vector<double>(mu.size()));
        for (std::size_t j = 0; j < mu.size(); ++j) {
            Vec gj = phi.grad(displacement_to(q, mu.particles[j]));
            for (std::size_t a = 0; a < d; ++a) terms[a][j] = gj[a];
        }
        for (std::size_t a = 0; a < d; ++a)
            g[a] = perm_invariant_sum(std::move(terms[a])) / static_cast<double>(mu.size());
        return g;
    };
    f.grad_mu_fn = [phi](const Vec& q, const EmpiricalMeasure& mu, std::size_t r) {
        return scaled(phi.grad(displacement_to(q, mu.particles[r])), -1.0);
    };
    f.grad_mu_grad_q_fn = [phi](const Vec& q, const EmpiricalMeasure& mu, std::size_t r) {
        return Mat(-phi.hess(displacement_to(q, mu.particles[r])));
    };
    return f;
}

CouplingModel builtin_cosine_convolution(double amplitude, double kappa) {
    CouplingModel f = builtin_convolution_coupling(cosine_kernel(amplitude), kappa);
    f.value_raw = [amplitude](const double* q, const EmpiricalMeasure& mu, std::size_t d) {
        const std::size_t n = mu.size();
        if (n > kMaxRawParticles) throw std::invalid_argument("too many particles for raw path");
        double terms[kMaxRawParticles];
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c)
                s += std::cos(two_pi * (q[c] - mu.particles[j][c]));
            terms[j] = s;
        }
        return amplitude / (two_pi * two_pi) * sorted_sum(terms, n) / static_cast<double>(n);
    };
    f.grad_q_raw = [amplitude](const double* q, const EmpiricalMeasure& mu, std::size_t d,
                               double* out) {
        const std::size_t n = mu.size();
        if (n > kMaxRawParticles) throw std::invalid_argument("too many particles for raw path");
        double terms[kMaxRawParticles];
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t j = 0; j < n; ++j)
                terms[j] = std::sin(two_pi * (q[c] - mu.particles[j][c]));
            out[c] = -amplitude / two_pi * sorted_sum(terms, n) / static_cast<double>(n);
        }
    };
    return f;
}

CouplingModel builtin_constant_cost(double c) {
    CouplingModel g;
    g.kappa = 0.0;
    g.measure_dependent = false;
    g.value = [c](const Vec&, const EmpiricalMeasure&) { return c; };
    g.grad_q_fn = [](const Vec& q, const EmpiricalMeasure&) { return Vec(q.size(), 0.0); };
    g.value_raw = [c](const double*, const EmpiricalMeasure&, std::size_t) { return c; };
    g.grad_q_raw = [](const double*, const EmpiricalMeasure&, std::size_t d, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;
    };
    g.grad_mu_fn = [](const Vec& q, const EmpiricalMeasure&, std::size_t) {
        return Vec(q.size(), 0.0);
    };
    g.grad_mu_grad_q_fn = [](const Vec& q, const EmpiricalMeasure&, std::size_t) {
        const auto d = static_cast<Eigen::Index>(q.size());
        return Mat::Zero(d, d);
    };
    return g;
}

CouplingModel builtin_cosine_grad_cost(double a) {
    CouplingModel g = builtin_constant_cost(0.0);
    g.kappa = std::abs(a) * two_pi;  // covers grad and the higher q-derivatives in d <= 2
    g.value = [a](const Vec& q, const EmpiricalMeasure&) {
        double s = 0.0;
        for (double qi : q) s += std::sin(two_pi * qi);
        return a * s / two_pi;
    };
    g.grad_q_fn = [a](const Vec& q, const EmpiricalMeasure&) {
        Vec out(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) out[i] = a * std::cos(two_pi * q[i]);
        return out;
    };
    g.value_raw = [a](const double* q, const EmpiricalMeasure&, std::size_t d) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += std::sin(two_pi * q[i]);
        return a * s / two_pi;
    };
    g.grad_q_raw = [a](const double* q, const EmpiricalMeasure&, std::size_t d, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = a * std::cos(two_pi * q[i]);
    };
    return g;
}

CouplingModel builtin_linear_drift_cost(const Vec& a) {
    CouplingModel g = builtin_constant_cost(0.0);
    g.kappa = norm2(a);
    g.periodic_q = false;
    g.value = [a](const Vec& q, const EmpiricalMeasure&) { return dot(a, q); };
    g.grad_q_fn = [a](const Vec&, const EmpiricalMeasure&) { return a; };
    g.value_raw = [a](const double* q, const EmpiricalMeasure&, std::size_t d) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += a[i] * q[i];
        return s;
    };
    g.grad_q_raw = [a](const double*, const EmpiricalMeasure&, std::size_t d, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = a[i];
    };
    return g;
}

CouplingModel builtin_quadratic_well_cost(double a) {
    CouplingModel g = builtin_constant_cost(0.0);
    g.kappa = std::abs(a);
    g.periodic_q = false;
    g.value = [a](const Vec& q, const EmpiricalMeasure&) { return 0.5 * a * dot(q, q); };
    g.grad_q_fn = [a](const Vec& q, const EmpiricalMeasure&) { return scaled(q, a); };
    g.value_raw = [a](const double* q, const EmpiricalMeasure&, std::size_t d) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += q[i] * q[i];
        return 0.5 * a * s;
    };
    g.grad_q_raw = [a](const double* q, const EmpiricalMeasure&, std::size_t d, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = a * q[i];
    };
    return g;
}

double DerivativeReport::entry(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e.max_error;
    throw std::invalid_argument("DerivativeReport: no entry named " + name);
}

DerivativeReport check_derivatives(const CoefficientTriple& triple, std::size_t d,
                                   std::size_t probes, double h, std::uint64_t seed) {
    if (probes < 1 || h <= 0) throw std::invalid_argument("check_derivatives: bad parameters");
    UniformSampler rng(seed);
    auto rand_vec = [&](double lo, double hi) {
        Vec v(d);
        for (double& x : v) x = lo + (hi - lo) * rng.next();
        return v;
    };
    auto rand_measure = [&](std::size_t n) {
        std::vector<Vec> pts(n);
        for (auto& p : pts) p = rand_vec(0.0, 1.0);
        return make_measure(pts);
    };

    DerivativeReport rep;
    double e_hq = 0, e_hp = 0, e_hper = 0;
    double kappa_obs = 0.0;
    struct CInfo {
        const CouplingModel* m;
        std::string tag;
    };
    const CInfo couplings[2] = {{&triple.running_cost, "F"}, {&triple.initial_cost, "g"}};
    std::vector<double> e_grad_q(2, 0.0), e_per(2, 0.0), e_mu(2, 0.0), e_mixed(2, 0.0),
        e_second(2, 0.0);

    for (std::size_t probe = 0; probe < probes; ++probe) {
        Vec q = rand_vec(0.0, 1.0), p = rand_vec(-1.0, 1.0);
        const auto& H = triple.hamiltonian;
        Vec fdq = fd_gradient([&](const Vec& x) { return H.value(x, p); }, q, h);
        Vec fdp = fd_gradient([&](const Vec& x) { return H.value(q, x); }, p, h);
        Vec aq = H.grad_q(q, p), ap = H.grad_p(q, p);
        for (std::size_t i = 0; i < d; ++i) {
            e_hq = std::max(e_hq, std::abs(aq[i] - fdq[i]));
            e_hp = std::max(e_hp, std::abs(ap[i] - fdp[i]));
        }
        if (H.periodic_q) {
            for (std::size_t i = 0; i < d; ++i) {
                Vec qs = q;
                qs[i] += 1.0;
                e_hper = std::max(e_hper, std::abs(H.value(qs, p) - H.value(q, p)));
            }
        }

        EmpiricalMeasure mu = rand_measure(5);
        for (int c = 0; c < 2; ++c) {
            const CouplingModel& m = *couplings[c].m;
            Vec fdg = fd_gradient([&](const Vec& x) { return m.value(x, mu); }, q, h);
            Vec ag = m.grad_q(q, mu);
            for (std::size_t i = 0; i < d; ++i)
                e_grad_q[c] = std::max(e_grad_q[c], std::abs(ag[i] - fdg[i]));
            kappa_obs = std::max(kappa_obs, norm2(ag));
            if (m.periodic_q) {
                for (std::size_t i = 0; i < d; ++i) {
                    Vec qs = q;
                    qs[i] += 1.0;
                    e_per[c] = std::max(e_per[c], std::abs(m.value(qs, mu) - m.value(q, mu)));
                }
            }
            if (m.measure_dependent) {
                const std::size_t r = probe % mu.size();
                const double n = static_cast<double>(mu.size());
                // grad_mu against the n-scaled particle difference quotient
                Vec amu = m.grad_mu(q, mu, r);
                for (std::size_t a = 0; a < d; ++a) {
                    EmpiricalMeasure plus = mu, minus = mu;
                    Vec cp = mu.particles[r].coords, cm = cp;
                    cp[a] += h;
                    cm[a] -= h;
                    plus.particles[r] = wrap(cp);
                    minus.particles[r] = wrap(cm);
                    double fd = n * (m.value(q, plus) - m.value(q, minus)) / (2.0 * h);
                    e_mu[c] = std::max(e_mu[c], std::abs(amu[a] - fd));
                    // mixed derivative identity: d_{x_r} grad_q value = (1/n) grad_mu grad_q
                    Vec gp = m.grad_q(q, plus), gm = m.grad_q(q, minus);
                    Mat mm = m.grad_mu_grad_q(q, mu, r);
                    for (std::size_t b = 0; b < d; ++b) {
                        double fd2 = n * (gp[b] - gm[b]) / (2.0 * h);
                        e_mixed[c] = std::max(
                            e_mixed[c],
                            std::abs(mm(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -
                                     fd2));
                    }
                    // cross-particle second derivative d2/dx_{r2} dx_r of the
                    // value; vanishes for couplings linear in the measure
                    const std::size_t r2 = (r + 1) % mu.size();
                    Vec c2p = mu.particles[r2].coords, c2m = c2p;
                    c2p[a] += h;
                    c2m[a] -= h;
                    EmpiricalMeasure m_pp = plus, m_pm = plus, m_mp = minus, m_mm = minus;
                    m_pp.particles[r2] = wrap(c2p);
                    m_pm.particles[r2] = wrap(c2m);
                    m_mp.particles[r2] = wrap(c2p);
                    m_mm.particles[r2] = wrap(c2m);
                    double cross = (m.value(q, m_pp) - m.value(q, m_pm) - m.value(q, m_mp) +
                                    m.value(q, m_mm)) /
                                   (4.0 * h * h);
                    e_second[c] = std::max(e_second[c], std::abs(cross));
                }
            }
        }
    }

    rep.entries.push_back({"H.grad_q", e_hq});
    rep.entries.push_back({"H.grad_p", e_hp});
    rep.entries.push_back({"H.periodicity", e_hper});
    for (int c = 0; c < 2; ++c) {
        const std::string& t = couplings[c].tag;
        rep.entries.push_back({t + ".grad_q", e_grad_q[c]});
        rep.entries.push_back({t + ".periodicity", e_per[c]});
        rep.entries.push_back({t + ".grad_mu", e_mu[c]});
        rep.entries.push_back({t + ".grad_mu_grad_q", e_mixed[c]});
        rep.entries.push_back({t + ".second_mu_cross", e_second[c]});
    }
    rep.observed_kappa = kappa_obs;
    for (int c = 0; c < 2; ++c) {
        double declared = couplings[c].m->kappa;
        double own = 0.0;
        // re-probe each coupling's own grad norm against its declared budget
        UniformSampler rng2(seed + 1 + c);
        for (std::size_t probe = 0; probe < probes; ++probe) {
            Vec q(d);
            for (double& x : q) x = rng2.next();
            std::vector<Vec> pts(4, Vec(d));
            for (auto& ptv : pts)
                for (double& x : ptv) x = rng2.next();
            own = std::max(own, norm2(couplings[c].m->grad_q(q, make_measure(pts))));
        }
        if (own > declared + 1e-9) rep.flags.push_back("kappa_exceeded:" + couplings[c].tag);
    }
    if (!(triple.theta > CoefficientTriple::theta_floor(kappa_obs)))
        rep.flags.push_back("theta_too_small");
    return rep;
}

}  // namespace mfg
