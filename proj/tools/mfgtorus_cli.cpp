#include <CLI11.hpp>
#include <iostream>

#include "mfgtorus/runner.hpp"

namespace {

struct CommonOptions {
    std::string scenario_path;
    std::string out_dir;
    // overrides; sentinel values mean "keep scenario setting"
    std::uint64_t seed = 0;
    bool seed_set = false;
    double tol = -1.0;
    int max_iter = -1;
    double T = -1.0, s = -1.0;
    int K = -1, grid = -1, n_particles = -1;
    double fd_step = -1.0;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--scenario", opt.scenario_path, "scenario file (key=value or JSON)")
        ->required();
    cmd->add_option("--out", opt.out_dir, "output directory")->required();
    cmd->add_option("--seed", opt.seed, "override measure.seed")
        ->each([&](const std::string&) { opt.seed_set = true; });
    cmd->add_option("--tol", opt.tol, "override tolerances.fixed_point");
    cmd->add_option("--max-iter", opt.max_iter, "override tolerances.max_iters");
    cmd->add_option("--T", opt.T, "override time.T");
    cmd->add_option("--s", opt.s, "override time.s");
    cmd->add_option("--K", opt.K, "override time.K");
    cmd->add_option("--grid", opt.grid, "override grid.points_per_axis");
    cmd->add_option("--n-particles", opt.n_particles, "override measure.n");
    cmd->add_option("--fd-step", opt.fd_step, "override tolerances.fd_q");
}

mfg::Scenario resolve(const CommonOptions& opt) {
    mfg::Scenario sc = mfg::load_scenario(opt.scenario_path);
    if (opt.seed_set) sc.seed = opt.seed;
    if (opt.tol > 0) sc.tol_fixed_point = opt.tol;
    if (opt.max_iter > 0) sc.max_iters = opt.max_iter;
    if (opt.T > 0) sc.T = opt.T;
    if (opt.s >= 0) sc.s = opt.s;
    if (opt.K > 0) sc.K = opt.K;
    if (opt.grid > 0) sc.grid_per_axis = static_cast<std::size_t>(opt.grid);
    if (opt.n_particles > 0) {
        sc.n_particles = static_cast<std::size_t>(opt.n_particles);
        sc.particles.clear();
    }
    if (opt.fd_step > 0) sc.fd_q = opt.fd_step;
    return sc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"short-time mean field games on the torus via characteristics"};
    app.require_subcommand(1);

    CommonOptions opt;
    auto* cmd_solve = app.add_subcommand("solve", "solve the characteristic system and dump it");
    auto* cmd_verify = app.add_subcommand("verify", "run the MFG verification checks");
    auto* cmd_master = app.add_subcommand("master", "evaluate the master-equation residual");
    auto* cmd_conv = app.add_subcommand("convergence", "run the refinement sweep");
    for (auto* c : {cmd_solve, cmd_verify, cmd_master, cmd_conv}) add_common(c, opt);

    CLI11_PARSE(app, argc, argv);

    try {
        mfg::Scenario sc = resolve(opt);
        if (cmd_solve->parsed()) return mfg::run_solve(sc, opt.out_dir);
        if (cmd_verify->parsed()) return mfg::run_verify(sc, opt.out_dir);
        if (cmd_master->parsed()) return mfg::run_master(sc, opt.out_dir);
        if (cmd_conv->parsed()) return mfg::run_convergence(sc, opt.out_dir);
        return 3;
    } catch (const mfg::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 3;
    } catch (const mfg::NoConvergenceError& e) {
        std::cerr << "solver did not converge: " << e.what() << "\n";
        return 2;
    } catch (const mfg::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
