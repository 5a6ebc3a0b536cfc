#include "mfgtorus/characteristics.hpp"

#include <algorithm>
#include <cmath>

namespace mfg {

int SolverConfig::s_index() const {
    const double step = dt();
    int ks = static_cast<int>(std::lround(s / step));
    if (ks < 0 || ks > K || std::abs(s - ks * step) > 1e-9 * std::max(T, 1.0))
        throw std::invalid_argument("SolverConfig: s must lie on the time grid");
    return ks;
}

void SolverConfig::validate() const {
    if (!(T > 0) || !(s >= 0) || !(s <= T)) throw std::invalid_argument("SolverConfig: need 0 <= s <= T");
    if (K < 2) throw std::invalid_argument("SolverConfig: K must be >= 2");
    if (!(tol_fixed_point > 0) || !(fd_step_q > 0) || !(fd_step_x > 0) || !(newton_tol > 0))
        throw std::invalid_argument("SolverConfig: tolerances must be positive");
    if (max_iters < 1 || newton_max_iters < 1)
        throw std::invalid_argument("SolverConfig: iteration caps must be positive");
    (void)s_index();
}

namespace {

// ---- allocation-free evaluator adapters --------------------------------

struct EvalScratch {
    Vec q, p, out;
};

inline void ham_grad_p(const HamiltonianModel& H, const double* q, const double* p,
                       std::size_t d, double* out, EvalScratch& s) {
    if (H.grad_p_raw) {
        H.grad_p_raw(q, p, d, out);
        return;
    }
    s.q.assign(q, q + d);
    s.p.assign(p, p + d);
    Vec g = H.grad_p(s.q, s.p);
    std::copy(g.begin(), g.end(), out);
}

inline void ham_grad_q(const HamiltonianModel& H, const double* q, const double* p,
                       std::size_t d, double* out, EvalScratch& s) {
    if (H.grad_q_raw) {
        H.grad_q_raw(q, p, d, out);
        return;
    }
    s.q.assign(q, q + d);
    s.p.assign(p, p + d);
    Vec g = H.grad_q(s.q, s.p);
    std::copy(g.begin(), g.end(), out);
}

inline void coupling_grad_q(const CouplingModel& F, const double* q, const EmpiricalMeasure& mu,
                            std::size_t d, double* out, EvalScratch& s) {
    if (F.grad_q_raw) {
        F.grad_q_raw(q, mu, d, out);
        return;
    }
    s.q.assign(q, q + d);
    Vec g = F.grad_q(s.q, mu);
    std::copy(g.begin(), g.end(), out);
}

// ---- flat per-point trajectories ---------------------------------------

// row k of a column lives at [k*d, (k+1)*d)
struct FlatCols {
    std::vector<double> q, p;

    void init(int K, std::size_t d, const double* base) {
        q.assign(static_cast<std::size_t>(K + 1) * d, 0.0);
        p.assign(static_cast<std::size_t>(K + 1) * d, 0.0);
        for (int k = 0; k <= K; ++k)
            for (std::size_t c = 0; c < d; ++c) q[static_cast<std::size_t>(k) * d + c] = base[c];
    }
};

struct SweepBuffers {
    std::vector<double> f;  // (K+1)*d integrand values
    EvalScratch scratch;
    Vec p0;
};

// One application of the integral operator to a single tracked point against
// the measure path `sigmas`. Component 1 integrates grad_p H from s,
// component 2 integrates grad_q H + grad_q F from 0 below the initial-cost
// gradient. Trapezoid on the grid; positions wrapped back to [0,1).
void sweep_point(const double* base, const FlatCols& in, FlatCols& out,
                 const std::vector<EmpiricalMeasure>& sigmas, const CoefficientTriple& triple,
                 int K, int ks, double dt, std::size_t d, SweepBuffers& buf) {
    buf.f.resize(static_cast<std::size_t>(K + 1) * d);
    out.q.resize(static_cast<std::size_t>(K + 1) * d);
    out.p.resize(static_cast<std::size_t>(K + 1) * d);
    double* f = buf.f.data();
    const double* qin = in.q.data();
    const double* pin = in.p.data();

    for (int k = 0; k <= K; ++k)
        ham_grad_p(triple.hamiltonian, qin + static_cast<std::size_t>(k) * d,
                   pin + static_cast<std::size_t>(k) * d, d,
                   f + static_cast<std::size_t>(k) * d, buf.scratch);
    // cumulative trapezoid anchored at ks, accumulated straight into out.q
    double* oq = out.q.data();
    for (std::size_t c = 0; c < d; ++c) oq[static_cast<std::size_t>(ks) * d + c] = 0.0;
    for (int k = ks + 1; k <= K; ++k)
        for (std::size_t c = 0; c < d; ++c)
            oq[static_cast<std::size_t>(k) * d + c] =
                oq[static_cast<std::size_t>(k - 1) * d + c] +
                0.5 * dt *
                    (f[static_cast<std::size_t>(k - 1) * d + c] +
                     f[static_cast<std::size_t>(k) * d + c]);
    for (int k = ks - 1; k >= 0; --k)
        for (std::size_t c = 0; c < d; ++c)
            oq[static_cast<std::size_t>(k) * d + c] =
                oq[static_cast<std::size_t>(k + 1) * d + c] -
                0.5 * dt *
                    (f[static_cast<std::size_t>(k) * d + c] +
                     f[static_cast<std::size_t>(k + 1) * d + c]);
    for (int k = 0; k <= K; ++k)
        for (std::size_t c = 0; c < d; ++c) {
            double pos = base[c] + oq[static_cast<std::size_t>(k) * d + c];
            if (!std::isfinite(pos))
                throw SolverError("apply_operator: non-finite intermediate value");
            oq[static_cast<std::size_t>(k) * d + c] = wrap_coord(pos);
        }

    for (int k = 0; k <= K; ++k) {
        double* fk = f + static_cast<std::size_t>(k) * d;
        const double* qk = qin + static_cast<std::size_t>(k) * d;
        ham_grad_q(triple.hamiltonian, qk, pin + static_cast<std::size_t>(k) * d, d, fk,
                   buf.scratch);
        double gf[8];
        coupling_grad_q(triple.running_cost, qk, sigmas[k], d, gf, buf.scratch);
        for (std::size_t c = 0; c < d; ++c) fk[c] += gf[c];
    }
    buf.p0.resize(d);
    coupling_grad_q(triple.initial_cost, qin, sigmas[0], d, buf.p0.data(), buf.scratch);
    double* op = out.p.data();
    double acc[8];
    for (std::size_t c = 0; c < d; ++c) {
        acc[c] = 0.0;
        op[c] = buf.p0[c];
    }
    for (int k = 1; k <= K; ++k)
        for (std::size_t c = 0; c < d; ++c) {
            acc[c] += 0.5 * dt *
                      (f[static_cast<std::size_t>(k - 1) * d + c] +
                       f[static_cast<std::size_t>(k) * d + c]);
            double v = buf.p0[c] - acc[c];
            if (!std::isfinite(v))
                throw SolverError("apply_operator: non-finite intermediate value");
            op[static_cast<std::size_t>(k) * d + c] = v;
        }
}

// scaled sup distance between two flat columns
double cols_distance(const FlatCols& a, const FlatCols& b, std::size_t d, double theta) {
    double sup = 0.0;
    const std::size_t rows = a.q.size() / d;
    for (std::size_t k = 0; k < rows; ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double t = a.q[k * d + c] - b.q[k * d + c];
            double dq = t - std::floor(t + 0.5);
            double dp = (a.p[k * d + c] - b.p[k * d + c]) / theta;
            s += dq * dq + dp * dp;
        }
        sup = std::max(sup, s);
    }
    return std::sqrt(sup);
}

std::vector<EmpiricalMeasure> measures_from_flat(const std::vector<FlatCols>& cols, int K,
                                                 std::size_t d, std::size_t n) {
    std::vector<EmpiricalMeasure> out(static_cast<std::size_t>(K) + 1);
    for (int k = 0; k <= K; ++k) {
        out[k].particles.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            Vec c(d);
            for (std::size_t a = 0; a < d; ++a)
                c[a] = cols[j].q[static_cast<std::size_t>(k) * d + a];
            out[k].particles[j] = TorusPoint{std::move(c)};
        }
    }
    return out;
}

struct IterationOutcome {
    ConvergenceTrace trace;
    bool converged = false;
};

// shared Picard loop with divergence detection
template <typename State, typename Step, typename Dist>
IterationOutcome picard(State& z, const Step& step, const Dist& dist, double tol, int max_iters) {
    IterationOutcome out;
    int bad_streak = 0;
    for (int m = 1; m <= max_iters; ++m) {
        State z_next;
        try {
            z_next = step(z);
        } catch (const SolverError&) {
            throw NoConvergenceError("fixed-point iteration produced non-finite values",
                                     out.trace.ratios);
        }
        double diff = dist(z_next, z);
        z = std::move(z_next);
        out.trace.iterations = m;
        if (!out.trace.diffs.empty() && out.trace.diffs.back() > 0.0) {
            double r = diff / out.trace.diffs.back();
            out.trace.ratios.push_back(r);
            bad_streak = (r >= 1.0) ? bad_streak + 1 : 0;
        }
        out.trace.diffs.push_back(diff);
        out.trace.final_diff = diff;
        if (diff < tol) {
            out.converged = true;
            return out;
        }
        if (bad_streak >= 5)
            throw NoConvergenceError(
                "fixed-point iteration is not contracting (T too large for these coefficients)",
                out.trace.ratios);
    }
    throw NoConvergenceError("fixed-point iteration exceeded max_iters", out.trace.ratios);
}

FlatCols candidate_column(const Candidate& z, std::size_t pt, std::size_t d) {
    FlatCols col;
    const std::size_t rows = z.q.size();
    col.q.resize(rows * d);
    col.p.resize(rows * d);
    for (std::size_t k = 0; k < rows; ++k)
        for (std::size_t c = 0; c < d; ++c) {
            col.q[k * d + c] = z.q[k][pt][c];
            col.p[k * d + c] = z.p[k][pt][c];
        }
    return col;
}

}  // namespace

Candidate apply_operator(const Candidate& z, const CoefficientTriple& triple,
                         const ProblemSetup& setup) {
    const int K = setup.cfg.K;
    const int ks = setup.cfg.s_index();
    const double dt = setup.cfg.dt();
    const std::size_t d = setup.mu.dim();
    const std::size_t total = setup.n_points();
    if (d > 8) throw std::invalid_argument("apply_operator: dimension too large");

    std::vector<EmpiricalMeasure> sigmas(static_cast<std::size_t>(K) + 1);
    for (int k = 0; k <= K; ++k) {
        sigmas[k].particles.assign(z.q[k].begin(),
                                   z.q[k].begin() + static_cast<std::ptrdiff_t>(setup.mu.size()));
    }

    Candidate out;
    out.q.assign(static_cast<std::size_t>(K) + 1, std::vector<TorusPoint>(total));
    out.p.assign(static_cast<std::size_t>(K) + 1, std::vector<Vec>(total));
    SweepBuffers buf;
    FlatCols out_col;
    for (std::size_t pt = 0; pt < total; ++pt) {
        FlatCols in_col = candidate_column(z, pt, d);
        sweep_point(setup.base_point(pt).coords.data(), in_col, out_col, sigmas, triple, K, ks,
                    dt, d, buf);
        for (int k = 0; k <= K; ++k) {
            Vec qk(d), pk(d);
            for (std::size_t c = 0; c < d; ++c) {
                qk[c] = out_col.q[static_cast<std::size_t>(k) * d + c];
                pk[c] = out_col.p[static_cast<std::size_t>(k) * d + c];
            }
            out.q[k][pt] = TorusPoint{std::move(qk)};
            out.p[k][pt] = std::move(pk);
        }
    }
    return out;
}

double candidate_distance(const Candidate& a, const Candidate& b, double theta) {
    double sup = 0.0;
    for (std::size_t k = 0; k < a.q.size(); ++k) {
        for (std::size_t pt = 0; pt < a.q[k].size(); ++pt) {
            auto dq = min_displacement(b.q[k][pt], a.q[k][pt]);
            double s = dot(dq.components, dq.components);
            const Vec& pa = a.p[k][pt];
            const Vec& pb = b.p[k][pt];
            for (std::size_t c = 0; c < pa.size(); ++c) {
                double dp = (pa[c] - pb[c]) / theta;
                s += dp * dp;
            }
            sup = std::max(sup, s);
        }
    }
    return std::sqrt(sup);
}

CharacteristicField solve(const CoefficientTriple& triple, const SolverConfig& cfg,
                          const EmpiricalMeasure& mu, const std::vector<TorusPoint>& queries) {
    cfg.validate();
    if (mu.size() < 1) throw std::invalid_argument("solve: measure needs at least one particle");
    ProblemSetup setup{cfg, mu, queries};
    const int K = cfg.K;
    const int ks = cfg.s_index();
    const double dt = cfg.dt();
    const std::size_t d = mu.dim();
    const std::size_t n = mu.size();
    const std::size_t total = setup.n_points();
    if (d > 8) throw std::invalid_argument("solve: dimension too large");

    std::vector<FlatCols> state(total);
    for (std::size_t pt = 0; pt < total; ++pt)
        state[pt].init(K, d, setup.base_point(pt).coords.data());

    SweepBuffers buf;
    auto step = [&](const std::vector<FlatCols>& cur) {
        auto sigmas = measures_from_flat(cur, K, d, n);
        std::vector<FlatCols> next(total);
        for (std::size_t pt = 0; pt < total; ++pt)
            sweep_point(setup.base_point(pt).coords.data(), cur[pt], next[pt], sigmas, triple, K,
                        ks, dt, d, buf);
        return next;
    };
    auto dist = [&](const std::vector<FlatCols>& a, const std::vector<FlatCols>& b) {
        double sup = 0.0;
        for (std::size_t pt = 0; pt < total; ++pt)
            sup = std::max(sup, cols_distance(a[pt], b[pt], d, triple.theta));
        return sup;
    };
    auto outcome = picard(state, step, dist, cfg.tol_fixed_point, cfg.max_iters);

    CharacteristicField field;
    field.setup = std::move(setup);
    field.sigma1.assign(static_cast<std::size_t>(K) + 1, std::vector<TorusPoint>(total));
    field.sigma2.assign(static_cast<std::size_t>(K) + 1, std::vector<Vec>(total));
    for (int k = 0; k <= K; ++k)
        for (std::size_t pt = 0; pt < total; ++pt) {
            Vec qk(d), pk(d);
            for (std::size_t c = 0; c < d; ++c) {
                qk[c] = state[pt].q[static_cast<std::size_t>(k) * d + c];
                pk[c] = state[pt].p[static_cast<std::size_t>(k) * d + c];
            }
            field.sigma1[k][pt] = TorusPoint{std::move(qk)};
            field.sigma2[k][pt] = std::move(pk);
        }
    field.sigma_path = measures_from_flat(state, K, d, n);
    field.trace = std::move(outcome.trace);
    // pin the terminal slice bitwise: the integral from s to s is empty
    for (std::size_t pt = 0; pt < total; ++pt)
        field.sigma1[ks][pt] = field.setup.base_point(pt);
    return field;
}

ContractionReport contraction_report(const CharacteristicField& field) {
    ContractionReport rep;
    rep.ratios = field.trace.ratios;
    for (double r : rep.ratios) rep.max_ratio = std::max(rep.max_ratio, r);
    return rep;
}

PointTrajectory solve_frozen(const CharacteristicField& field, const CoefficientTriple& triple,
                             const TorusPoint& x) {
    const auto& cfg = field.setup.cfg;
    const int K = cfg.K;
    const int ks = field.s_index();
    const double dt = field.dt();
    const std::size_t d = x.dim();

    FlatCols state;
    state.init(K, d, x.coords.data());
    SweepBuffers buf;
    auto step = [&](const FlatCols& cur) {
        FlatCols next;
        sweep_point(x.coords.data(), cur, next, field.sigma_path, triple, K, ks, dt, d, buf);
        return next;
    };
    auto dist = [&](const FlatCols& a, const FlatCols& b) {
        return cols_distance(a, b, d, triple.theta);
    };
    picard(state, step, dist, cfg.tol_fixed_point, cfg.max_iters);

    PointTrajectory traj;
    traj.sigma1.resize(static_cast<std::size_t>(K) + 1);
    traj.sigma2.resize(static_cast<std::size_t>(K) + 1);
    for (int k = 0; k <= K; ++k) {
        Vec qk(d), pk(d);
        for (std::size_t c = 0; c < d; ++c) {
            qk[c] = state.q[static_cast<std::size_t>(k) * d + c];
            pk[c] = state.p[static_cast<std::size_t>(k) * d + c];
        }
        traj.sigma1[k] = TorusPoint{std::move(qk)};
        traj.sigma2[k] = std::move(pk);
    }
    traj.sigma1[ks] = x;
    return traj;
}

std::vector<Mat> sigma1_jacobians(const CharacteristicField& field,
                                  const CoefficientTriple& triple, const TorusPoint& x, double h) {
    const auto d = static_cast<Eigen::Index>(x.dim());
    const int K = field.K();
    std::vector<Mat> jac(static_cast<std::size_t>(K) + 1, Mat(d, d));
    for (Eigen::Index a = 0; a < d; ++a) {
        Vec cp = x.coords, cm = x.coords;
        cp[a] += h;
        cm[a] -= h;
        auto plus = solve_frozen(field, triple, wrap(cp));
        auto minus = solve_frozen(field, triple, wrap(cm));
        for (int k = 0; k <= K; ++k) {
            auto diff = min_displacement(minus.sigma1[k], plus.sigma1[k]);
            for (Eigen::Index b = 0; b < d; ++b) jac[k](b, a) = diff[b] / (2.0 * h);
        }
    }
    return jac;
}

std::vector<Mat> sigma2_jacobians(const CharacteristicField& field,
                                  const CoefficientTriple& triple, const TorusPoint& x, double h) {
    const auto d = static_cast<Eigen::Index>(x.dim());
    const int K = field.K();
    std::vector<Mat> jac(static_cast<std::size_t>(K) + 1, Mat(d, d));
    for (Eigen::Index a = 0; a < d; ++a) {
        Vec cp = x.coords, cm = x.coords;
        cp[a] += h;
        cm[a] -= h;
        auto plus = solve_frozen(field, triple, wrap(cp));
        auto minus = solve_frozen(field, triple, wrap(cm));
        for (int k = 0; k <= K; ++k)
            for (Eigen::Index b = 0; b < d; ++b)
                jac[k](b, a) = (plus.sigma2[k][b] - minus.sigma2[k][b]) / (2.0 * h);
    }
    return jac;
}

bool BoundsLedger::all_finite() const {
    for (double v : {sup_sigma2, sup_dt_sigma1, sup_dt_sigma2, sup_dq_sigma1, sup_dq_sigma2,
                     sup_dqq_sigma1, sup_dqq_sigma2, sup_dtt_sigma1, sup_dtt_sigma2})
        if (!std::isfinite(v)) return false;
    return true;
}

BoundsLedger bounds_audit(const CharacteristicField& field, const CoefficientTriple& triple,
                          std::optional<DeclaredCaps> caps, std::size_t max_audit_points) {
    BoundsLedger led;
    led.caps = caps;
    const int K = field.K();
    const double dt = field.dt();
    const std::size_t total = field.n_points();
    const std::size_t d = field.setup.mu.dim();

    for (int k = 0; k <= K; ++k)
        for (std::size_t pt = 0; pt < total; ++pt)
            led.sup_sigma2 = std::max(led.sup_sigma2, norm2(field.sigma2[k][pt]));

    // time derivatives from the stored grid
    for (std::size_t pt = 0; pt < total; ++pt) {
        for (int k = 0; k <= K; ++k) {
            int klo = std::max(0, k - 1), khi = std::min(K, k + 1);
            double span = (khi - klo) * dt;
            auto d1 = min_displacement(field.sigma1[klo][pt], field.sigma1[khi][pt]);
            led.sup_dt_sigma1 = std::max(led.sup_dt_sigma1, d1.norm() / span);
            double s2 = 0;
            for (std::size_t c = 0; c < d; ++c) {
                double dp = (field.sigma2[khi][pt][c] - field.sigma2[klo][pt][c]) / span;
                s2 += dp * dp;
            }
            led.sup_dt_sigma2 = std::max(led.sup_dt_sigma2, std::sqrt(s2));
            if (k > 0 && k < K) {
                auto fwd = min_displacement(field.sigma1[k][pt], field.sigma1[k + 1][pt]);
                auto bwd = min_displacement(field.sigma1[k - 1][pt], field.sigma1[k][pt]);
                double a1 = 0, a2 = 0;
                for (std::size_t c = 0; c < d; ++c) {
                    double v1 = (fwd[c] - bwd[c]) / (dt * dt);
                    a1 += v1 * v1;
                    double v2 = (field.sigma2[k + 1][pt][c] - 2 * field.sigma2[k][pt][c] +
                                 field.sigma2[k - 1][pt][c]) /
                                (dt * dt);
                    a2 += v2 * v2;
                }
                led.sup_dtt_sigma1 = std::max(led.sup_dtt_sigma1, std::sqrt(a1));
                led.sup_dtt_sigma2 = std::max(led.sup_dtt_sigma2, std::sqrt(a2));
            }
        }
    }

    // spatial derivatives at a subsample of tracked points
    const double h = field.setup.cfg.fd_step_q;
    std::vector<TorusPoint> audit_pts;
    const auto& base_list =
        field.setup.queries.empty() ? field.setup.mu.particles : field.setup.queries;
    for (std::size_t i = 0; i < base_list.size() && audit_pts.size() < max_audit_points; ++i)
        audit_pts.push_back(base_list[i]);

    for (const auto& x : audit_pts) {
        auto center = solve_frozen(field, triple, x);
        std::vector<PointTrajectory> plus(d), minus(d);
        for (std::size_t a = 0; a < d; ++a) {
            Vec cp = x.coords, cm = x.coords;
            cp[a] += h;
            cm[a] -= h;
            plus[a] = solve_frozen(field, triple, wrap(cp));
            minus[a] = solve_frozen(field, triple, wrap(cm));
        }
        for (int k = 0; k <= K; ++k) {
            for (std::size_t a = 0; a < d; ++a) {
                auto grad1 = min_displacement(minus[a].sigma1[k], plus[a].sigma1[k]);
                led.sup_dq_sigma1 = std::max(led.sup_dq_sigma1, grad1.norm() / (2 * h));
                double g2 = 0, h1 = 0, h2 = 0;
                for (std::size_t c = 0; c < d; ++c) {
                    double v = (plus[a].sigma2[k][c] - minus[a].sigma2[k][c]) / (2 * h);
                    g2 += v * v;
                    double d1p = min_displacement(center.sigma1[k], plus[a].sigma1[k])[c];
                    double d1m = min_displacement(center.sigma1[k], minus[a].sigma1[k])[c];
                    double w1 = (d1p + d1m) / (h * h);
                    h1 += w1 * w1;
                    double w2 = (plus[a].sigma2[k][c] - 2 * center.sigma2[k][c] +
                                 minus[a].sigma2[k][c]) /
                                (h * h);
                    h2 += w2 * w2;
                }
                led.sup_dq_sigma2 = std::max(led.sup_dq_sigma2, std::sqrt(g2));
                led.sup_dqq_sigma1 = std::max(led.sup_dqq_sigma1, std::sqrt(h1));
                led.sup_dqq_sigma2 = std::max(led.sup_dqq_sigma2, std::sqrt(h2));
            }
        }
    }

    if (caps) {
        auto flag = [&](double v, double cap, const char* name) {
            if (v > cap) led.flags.push_back(name);
        };
        flag(std::max({led.sup_dt_sigma1, led.sup_dq_sigma1, led.sup_dqq_sigma1}), caps->A1,
             "A1_exceeded");
        flag(std::max({led.sup_dt_sigma2, led.sup_dq_sigma2, led.sup_dqq_sigma2}), caps->theta_A2,
             "theta_A2_exceeded");
        flag(led.sup_sigma2, caps->theta_B, "theta_B_exceeded");
        flag(led.sup_dtt_sigma1, caps->E1, "E1_exceeded");
        flag(led.sup_dtt_sigma2, caps->theta_E2, "theta_E2_exceeded");
    }
    return led;
}

SensitivityField particle_sensitivity_field(const CoefficientTriple& triple,
                                            const SolverConfig& cfg, const EmpiricalMeasure& mu,
                                            std::size_t j,
                                            const std::vector<TorusPoint>& extra_points) {
    if (j >= mu.size()) throw std::invalid_argument("particle_sensitivity: bad particle index");
    const std::size_t d = mu.dim();
    const std::size_t n = mu.size();
    const double h = cfg.fd_step_x;
    const double scale_n = static_cast<double>(n);
    const int K = cfg.K;

    // eval points: particles (j passively, via query slot 0), then extras
    std::vector<TorusPoint> queries;
    queries.push_back(mu.particles[j]);
    for (const auto& e : extra_points) queries.push_back(e);

    SensitivityField out;
    out.n_particles = n;
    const std::size_t n_eval = n + extra_points.size();
    out.at.assign(static_cast<std::size_t>(K) + 1, std::vector<SensitivityBlocks>(n_eval));
    for (auto& row : out.at)
        for (auto& b : row) {
            b.dsigma1 = Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            b.dsigma2 = Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        }

    for (std::size_t a = 0; a < d; ++a) {
        EmpiricalMeasure mu_p = mu, mu_m = mu;
        Vec cp = mu.particles[j].coords, cm = cp;
        cp[a] += h;
        cm[a] -= h;
        mu_p.particles[j] = wrap(cp);
        mu_m.particles[j] = wrap(cm);
        auto fp = solve(triple, cfg, mu_p, queries);
        auto fm = solve(triple, cfg, mu_m, queries);

        auto read = [&](const CharacteristicField& f, int k, std::size_t eval) {
            std::size_t src = (eval < n) ? (eval == j ? n + 0 : eval) : n + 1 + (eval - n);
            return std::make_pair(&f.sigma1[k][src], &f.sigma2[k][src]);
        };
        for (int k = 0; k <= K; ++k) {
            for (std::size_t eval = 0; eval < n_eval; ++eval) {
                auto [q_p, p_p] = read(fp, k, eval);
                auto [q_m, p_m] = read(fm, k, eval);
                auto dq = min_displacement(*q_m, *q_p);
                for (std::size_t b = 0; b < d; ++b) {
                    out.at[k][eval].dsigma1(static_cast<Eigen::Index>(b),
                                            static_cast<Eigen::Index>(a)) =
                        scale_n * dq[b] / (2.0 * h);
                    out.at[k][eval].dsigma2(static_cast<Eigen::Index>(b),
                                            static_cast<Eigen::Index>(a)) =
                        scale_n * ((*p_p)[b] - (*p_m)[b]) / (2.0 * h);
                }
            }
        }
    }
    return out;
}

SensitivityBlocks particle_sensitivity(const CoefficientTriple& triple, const SolverConfig& cfg,
                                       const EmpiricalMeasure& mu, std::size_t j, int k,
                                       const TorusPoint& q) {
    auto field = particle_sensitivity_field(triple, cfg, mu, j, {q});
    return field.at[k][mu.size()];
}

double taylor_remainder_ratio(const CoefficientTriple& triple, const SolverConfig& cfg,
                              const EmpiricalMeasure& mu, const TorusPoint& q, double scale,
                              std::size_t trials, std::uint64_t seed) {
    const std::size_t d = mu.dim();
    const std::size_t n = mu.size();
    const double dt = cfg.dt();
    auto base = solve(triple, cfg, mu, {q});
    const std::size_t q_idx = base.query_index(0);

    auto jac1 = sigma1_jacobians(base, triple, q, cfg.fd_step_q);
    auto jac2 = sigma2_jacobians(base, triple, q, cfg.fd_step_q);
    std::vector<SensitivityField> sens(n);
    for (std::size_t j = 0; j < n; ++j)
        sens[j] = particle_sensitivity_field(triple, cfg, mu, j, {q});

    UniformSampler rng(seed);
    auto rand_dir = [&](std::size_t dim) {
        Vec v(dim);
        double nrm = 0;
        do {
            for (double& x : v) x = 2.0 * rng.next() - 1.0;
            nrm = norm2(v);
        } while (nrm < 1e-12);
        for (double& x : v) x /= nrm;
        return v;
    };

    const int steps = std::max(1, static_cast<int>(std::lround(scale / dt)));
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        int k = base.s_index() / 2 + static_cast<int>(rng.next() * 3) - 1;
        k = std::clamp(k, steps, cfg.K - steps);
        int k2 = (rng.next() < 0.5) ? k - steps : k + steps;
        double delta_t = (k2 - k) * dt;

        Vec dq = scaled(rand_dir(d), scale * rng.next());
        std::vector<Vec> dx(n);
        double sum_sq = 0;
        for (auto& v : dx) {
            v = scaled(rand_dir(d), rng.next());
            sum_sq += dot(v, v);
        }
        double rescale = scale / std::sqrt(std::max(sum_sq, 1e-300));
        for (auto& v : dx) v = scaled(v, rescale);

        EmpiricalMeasure mu2 = mu;
        for (std::size_t j = 0; j < n; ++j)
            mu2.particles[j] = wrap(axpy(1.0, dx[j], mu.particles[j].coords));
        TorusPoint q2 = wrap(axpy(1.0, dq, q.coords));
        auto pert = solve(triple, cfg, mu2, {q2});

        auto dt_sigma1 = min_displacement(base.sigma1[k - 1][q_idx], base.sigma1[k + 1][q_idx]);
        Vec pred1(d), pred2(d);
        for (std::size_t b = 0; b < d; ++b) {
            pred1[b] = dt_sigma1[b] / (2 * dt) * delta_t;
            pred2[b] = (base.sigma2[k + 1][q_idx][b] - base.sigma2[k - 1][q_idx][b]) / (2 * dt) *
                       delta_t;
            for (std::size_t a = 0; a < d; ++a) {
                pred1[b] += jac1[k](static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) *
                            dq[a];
                pred2[b] += jac2[k](static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) *
                            dq[a];
            }
            for (std::size_t j = 0; j < n; ++j) {
                const auto& blocks = sens[j].at[k][n];  // at the query point
                for (std::size_t a = 0; a < d; ++a) {
                    pred1[b] += blocks.dsigma1(static_cast<Eigen::Index>(b),
                                               static_cast<Eigen::Index>(a)) *
                                dx[j][a] / static_cast<double>(n);
                    pred2[b] += blocks.dsigma2(static_cast<Eigen::Index>(b),
                                               static_cast<Eigen::Index>(a)) *
                                dx[j][a] / static_cast<double>(n);
                }
            }
        }
        auto actual1 = min_displacement(base.sigma1[k][q_idx], pert.sigma1[k2][pert.query_index(0)]);
        double rem = 0;
        for (std::size_t b = 0; b < d; ++b) {
            double r1 = actual1[b] - pred1[b];
            double r2 = pert.sigma2[k2][pert.query_index(0)][b] - base.sigma2[k][q_idx][b] -
                        pred2[b];
            rem += r1 * r1 + r2 * r2;
        }
        double dx_sq = 0;
        for (const auto& v : dx) dx_sq += dot(v, v);
        double denom = delta_t * delta_t + dot(dq, dq) + dx_sq;
        worst = std::max(worst, std::sqrt(rem) / denom);
    }
    return worst;
}

}  // namespace mfg
