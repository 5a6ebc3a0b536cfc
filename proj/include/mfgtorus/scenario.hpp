#pragma once

#include <map>
#include <string>

#include "mfgtorus/master.hpp"

namespace mfg {

inline constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SweepSpec {
    std::vector<int> K;
    std::vector<int> grid;
    std::vector<int> n;

    std::size_t levels() const;
    bool empty() const { return K.empty() && grid.empty() && n.empty(); }
};

// A fully resolved experiment description. Loadable from flat key = value
// text with [section] headers, or from JSON with the same keys (nested
// objects or dotted keys); unknown keys are hard errors.
struct Scenario {
    std::string name = "unnamed";
    std::size_t dimension = 1;
    double theta = 2.0;

    std::string hamiltonian_type = "quadratic";  // quadratic | nonconvex
    double hamiltonian_eps = 0.0;

    std::string running_cost_type = "none";  // none | convolution
    double running_cost_amplitude = 0.0;
    double running_cost_kappa = -1.0;  // <0: derived from the amplitude

    // constant | cosine_grad | convolution | linear_drift | quadratic_well
    std::string initial_cost_type = "constant";
    double initial_cost_value = 0.0;
    double initial_cost_amplitude = 0.0;
    double initial_cost_kappa = -1.0;
    Vec initial_cost_drift;  // for linear_drift

    std::size_t n_particles = 4;
    std::uint64_t seed = 1;
    std::vector<Vec> particles;  // explicit particle list; overrides the seed

    double T = 0.1;
    double s = 0.1;
    int K = 100;
    std::size_t grid_per_axis = 16;

    double tol_fixed_point = 1e-10;
    int max_iters = 50;
    double newton_tol = 1e-10;
    int newton_max_iters = 30;
    double fd_q = 1e-5;
    double fd_x = 1e-4;

    std::map<std::string, double> check_tolerances;  // overrides of the defaults
    std::vector<Vec> master_probes;                  // evaluation points for the master command
    std::vector<double> master_s_values;             // defaults to {s}
    SweepSpec sweep;

    SolverConfig solver_config() const;
    CoefficientTriple build_triple() const;
    EmpiricalMeasure build_measure() const;          // explicit list or seeded sample
    EmpiricalMeasure build_measure(std::size_t n_override) const;
    QueryLattice build_lattice() const;
    double check_tolerance(const std::string& name) const;  // override or default
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario_json(const std::string& text);

// echo of every resolved key, used for the manifest
std::map<std::string, std::string> scenario_echo(const Scenario& sc);

}  // namespace mfg
