#include "mfgtorus/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace mfg {

namespace fs = std::filesystem;

namespace {

class WallClock {
  public:
    explicit WallClock(fs::path log_path) : path_(std::move(log_path)) {}
    ~WallClock() {
        std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
        try {
            write_run_log(path_, dt.count());
        } catch (...) {
        }
    }

  private:
    fs::path path_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Scenario level_scenario(const Scenario& sc, std::size_t level) {
    Scenario out = sc;
    if (!sc.sweep.K.empty()) out.K = sc.sweep.K[level];
    if (!sc.sweep.grid.empty()) out.grid_per_axis = static_cast<std::size_t>(sc.sweep.grid[level]);
    if (!sc.sweep.n.empty()) out.n_particles = static_cast<std::size_t>(sc.sweep.n[level]);
    return out;
}

double fixed_point_residual(const CharacteristicField& field, const CoefficientTriple& triple) {
    Candidate z{field.sigma1, field.sigma2};
    Candidate once = apply_operator(z, triple, field.setup);
    return candidate_distance(once, z, triple.theta);
}

double terminal_condition_error(const CharacteristicField& field) {
    double worst = 0.0;
    const int ks = field.s_index();
    for (std::size_t pt = 0; pt < field.n_points(); ++pt)
        worst = std::max(worst, torus_dist(field.sigma1[ks][pt], field.setup.base_point(pt)));
    return worst;
}

double initial_condition_error(const CharacteristicField& field, const CoefficientTriple& triple) {
    double worst = 0.0;
    for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
        Vec expected =
            triple.initial_cost.grad_q(field.sigma1[0][pt].coords, field.measure_at(0));
        double s = 0;
        for (std::size_t c = 0; c < expected.size(); ++c) {
            double diff = field.sigma2[0][pt][c] - expected[c];
            s += diff * diff;
        }
        worst = std::max(worst, std::sqrt(s));
    }
    return worst;
}

}  // namespace

int run_solve(const Scenario& sc, const fs::path& outdir) {
    WallClock clock(outdir / "run.log");
    auto triple = sc.build_triple();
    auto mu = sc.build_measure();
    auto lattice = sc.build_lattice();
    auto cfg = sc.solver_config();
    try {
        auto field = solve(triple, cfg, mu, lattice.points);
        write_field_csv(outdir / "field.csv", field);
        auto sol = build_solution(field, triple, lattice);
        write_solution_csv(outdir / "solution.csv", sol);
        write_manifest(outdir / "manifest.json", sc, "solve", "converged", {}, &field.trace);
        return 0;
    } catch (const NoConvergenceError& e) {
        ConvergenceTrace trace;
        trace.ratios = e.ratios;
        write_manifest(outdir / "manifest.json", sc, "solve", "no_convergence", {}, &trace,
                       {{"error", e.what()}});
        return 2;
    }
}

int run_verify(const Scenario& sc, const fs::path& outdir) {
    WallClock clock(outdir / "run.log");
    auto triple = sc.build_triple();
    auto mu = sc.build_measure();
    auto lattice = sc.build_lattice();
    auto cfg = sc.solver_config();
    std::map<std::string, CheckResult> checks;
    auto leq = [&](const std::string& name, double value) {
        double tol = sc.check_tolerance(name);
        checks[name] = {value, tol, value <= tol};
    };

    try {
        auto field = solve(triple, cfg, mu, lattice.points);
        const int ks = field.s_index();

        {
            auto rep = contraction_report(field);
            double tol = sc.check_tolerance("contraction");
            checks["contraction"] = {rep.max_ratio, tol, rep.max_ratio < tol};
        }
        double term_err = terminal_condition_error(field);
        checks["terminal_condition"] = {term_err, 0.0, term_err <= 0.0};
        leq("initial_condition", initial_condition_error(field, triple));
        leq("fixed_point_residual", fixed_point_residual(field, triple));

        auto sol = build_solution(field, triple, lattice);
        leq("hjb", hjb_residual(sol, triple));
        leq("continuity", continuity_residual(sol));
        leq("gradient_identity", gradient_identity_check(sol, triple));
        leq("symmetry", symmetry_check(field, triple, 5, 0.25 * lattice.spacing()));

        {
            double worst = 0.0;
            const int stride = std::max(1, cfg.K / 4);
            for (int k = 0; k <= cfg.K; k += stride) {
                for (std::size_t i = 0; i < std::min<std::size_t>(lattice.size(), 8); ++i) {
                    auto inv = invert_flow_with_trajectory(field, triple, k, lattice.points[i]);
                    worst = std::max(worst,
                                     torus_dist(inv.trajectory.sigma1[k], lattice.points[i]));
                }
            }
            double tol = sc.check_tolerance("inversion_roundtrip");
            checks["inversion_roundtrip"] = {worst, tol, worst <= tol};
        }
        {
            double min_det = std::numeric_limits<double>::infinity();
            bool clean = true;
            const int stride = std::max(1, cfg.K / 4);
            for (int k = 0; k <= cfg.K; k += stride) {
                auto audit = jacobian_audit(field, triple, k);
                min_det = std::min(min_det, audit.min_det);
                clean = clean && audit.flags.empty();
            }
            checks["jacobian_min_det"] = {min_det, 0.5, clean && min_det > 0.5};
        }
        {
            std::vector<int> t0s;
            if (ks >= 4) t0s = {ks / 4, ks / 2};
            else if (ks >= 2) t0s = {ks / 2};
            double worst_flow = 0.0;
            for (int k0 : t0s)
                worst_flow =
                    std::max(worst_flow,
                             flow_identity_check(triple, cfg, mu, k0, lattice.points).worst());
            leq("flow", worst_flow);
            if (!t0s.empty()) {
                auto rep = uniqueness_consistency(triple, cfg, mu, lattice, t0s);
                leq("uniqueness", std::max(rep.sup_U_diff, rep.max_wasserstein));
            }
        }
        auto ledger = bounds_audit(field, triple);
        if (!ledger.all_finite())
            checks["bounds_finite"] = {1.0, 0.0, false};
        else
            checks["bounds_finite"] = {0.0, 0.0, true};

        std::vector<ResidualRow> rows;
        for (const auto& [name, res] : checks)
            rows.push_back({name, 0, cfg.K, lattice.size(), res.value});
        write_residuals_csv(outdir / "residuals.csv", rows);

        bool all_pass = true;
        for (const auto& [name, res] : checks) all_pass = all_pass && res.pass;
        write_manifest(outdir / "manifest.json", sc, "verify", all_pass ? "pass" : "check_failure",
                       checks, &field.trace);
        return all_pass ? 0 : 4;
    } catch (const NoConvergenceError& e) {
        ConvergenceTrace trace;
        trace.ratios = e.ratios;
        write_manifest(outdir / "manifest.json", sc, "verify", "no_convergence", checks, &trace,
                       {{"error", e.what()}});
        return 2;
    }
}

int run_master(const Scenario& sc, const fs::path& outdir) {
    WallClock clock(outdir / "run.log");
    const std::size_t levels = sc.sweep.empty() ? 1 : sc.sweep.levels();
    std::vector<Vec> probes = sc.master_probes;
    if (probes.empty()) {
        probes.push_back(Vec(sc.dimension, 0.3));
        probes.push_back(Vec(sc.dimension, 0.7));
    }
    std::vector<double> s_values = sc.master_s_values;
    if (s_values.empty()) s_values.push_back(sc.s);

    fs::create_directories(outdir);
    std::ofstream os(outdir / "master.csv", std::ios::binary);
    os << "scenario,level,n,K,m,h_q,h_x,s";
    for (std::size_t c = 0; c < sc.dimension; ++c) os << ",q" << c;
    os << ",u,grad_q_u_norm,residual,upsilon_fd_rel\n";

    std::map<std::string, CheckResult> checks;
    double worst_residual = 0.0, worst_upsilon_rel = 0.0;
    std::vector<double> residual_per_level;
    std::size_t total_solves = 0;

    try {
        for (std::size_t level = 0; level < levels; ++level) {
            Scenario lsc = level_scenario(sc, level);
            auto triple = lsc.build_triple();
            auto mu = lsc.build_measure();
            double level_worst = 0.0;
            for (double sv : s_values) {
                SolverConfig cfg = lsc.solver_config();
                cfg.s = sv;
                for (const auto& probe : probes) {
                    TorusPoint q = wrap(probe);
                    auto ev = evaluate_master(triple, cfg, mu, q, true);
                    total_solves += ev.solves_performed;
                    double ups_rel = 0.0;
                    for (std::size_t j = 0; j < mu.size(); ++j) {
                        Vec fd = grad_mu_u_fd(triple, cfg, mu, q, j);
                        double num = 0, den = 0;
                        for (std::size_t c = 0; c < fd.size(); ++c) {
                            double dv = ev.grad_mu_u[j][c] - fd[c];
                            num += dv * dv;
                            den += fd[c] * fd[c];
                        }
                        ups_rel = std::max(ups_rel,
                                           std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
                        total_solves += 2 * mu.dim();
                    }
                    os << lsc.name << "," << level << "," << mu.size() << "," << cfg.K << ","
                       << lsc.build_lattice().size() << "," << format_double(cfg.fd_step_q) << ","
                       << format_double(cfg.fd_step_x) << "," << format_double(sv);
                    for (std::size_t c = 0; c < sc.dimension; ++c)
                        os << "," << format_double(q[c]);
                    os << "," << format_double(ev.u) << "," << format_double(norm2(ev.grad_q_u))
                       << "," << format_double(ev.residual) << "," << format_double(ups_rel)
                       << "\n";
                    level_worst = std::max(level_worst, std::abs(ev.residual));
                    worst_residual = std::max(worst_residual, std::abs(ev.residual));
                    worst_upsilon_rel = std::max(worst_upsilon_rel, ups_rel);
                }
            }
            residual_per_level.push_back(level_worst);
        }
    } catch (const NoConvergenceError& e) {
        ConvergenceTrace trace;
        trace.ratios = e.ratios;
        write_manifest(outdir / "manifest.json", sc, "master", "no_convergence", checks, &trace,
                       {{"error", e.what()}});
        return 2;
    }

    {
        double tol = sc.check_tolerance("master");
        checks["master"] = {worst_residual, tol, worst_residual <= tol};
        double tol_u = sc.check_tolerance("upsilon_fd_rel");
        checks["upsilon_fd_rel"] = {worst_upsilon_rel, tol_u, worst_upsilon_rel <= tol_u};
    }
    bool all_pass = true;
    for (const auto& [name, res] : checks) all_pass = all_pass && res.pass;
    write_manifest(outdir / "manifest.json", sc, "master", all_pass ? "pass" : "check_failure",
                   checks, nullptr, {{"resolves", std::to_string(total_solves)}});
    if (residual_per_level.size() > 1)
        write_svg_chart(outdir / "master_residual.svg", "master residual", residual_per_level);
    return all_pass ? 0 : 4;
}

int run_convergence(const Scenario& sc, const fs::path& outdir) {
    WallClock clock(outdir / "run.log");
    if (sc.sweep.empty()) throw ConfigError("convergence command requires a [sweep] block");
    const std::size_t levels = sc.sweep.levels();
    std::map<std::string, std::vector<double>> series;

    try {
        for (std::size_t level = 0; level < levels; ++level) {
            Scenario lsc = level_scenario(sc, level);
            auto triple = lsc.build_triple();
            auto mu = lsc.build_measure();
            auto lattice = lsc.build_lattice();
            auto cfg = lsc.solver_config();
            auto field = solve(triple, cfg, mu, lattice.points);
            series["contraction_final_diff"].push_back(
                std::max(field.trace.final_diff, 1e-300));
            auto sol = build_solution(field, triple, lattice);
            series["hjb"].push_back(hjb_residual(sol, triple));
            series["continuity"].push_back(continuity_residual(sol));
            series["gradient_identity"].push_back(gradient_identity_check(sol, triple));
            if (sc.dimension > 1) series["symmetry"].push_back(
                    symmetry_check(field, triple, 5, 0.25 * lattice.spacing()));
        }
    } catch (const NoConvergenceError& e) {
        ConvergenceTrace trace;
        trace.ratios = e.ratios;
        write_manifest(outdir / "manifest.json", sc, "convergence", "no_convergence", {}, &trace,
                       {{"error", e.what()}});
        return 2;
    }

    std::vector<ConvergenceRow> rows;
    for (const auto& [check, values] : series) {
        for (std::size_t level = 0; level < values.size(); ++level) {
            double ratio = level > 0 && values[level] > 0 ? values[level - 1] / values[level] : 0.0;
            rows.push_back({check, static_cast<int>(level), values[level], ratio});
        }
        write_svg_chart(outdir / (check + ".svg"), check, values);
    }
    write_convergence_csv(outdir / "convergence.csv", rows);
    write_manifest(outdir / "manifest.json", sc, "convergence", "done", {});
    return 0;
}

}  // namespace mfg
