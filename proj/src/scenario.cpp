#include "mfgtorus/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mfg {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("invalid numeric value for key '" + key + "': " + v);
    }
}

long to_long(const std::string& v, const std::string& key) {
    double x = to_double(v, key);
    if (x != std::floor(x)) throw ConfigError("expected integer for key '" + key + "': " + v);
    return static_cast<long>(x);
}

std::vector<Vec> parse_rows(const std::string& v, const std::string& key) {
    std::vector<Vec> rows;
    for (const auto& row : split(v, ';')) {
        if (row.empty()) continue;
        Vec r;
        for (const auto& cell : split(row, ',')) r.push_back(to_double(cell, key));
        rows.push_back(std::move(r));
    }
    return rows;
}

const std::map<std::string, double> kDefaultCheckTols = {
    {"hjb", 1e-3},         {"continuity", 1e-3},  {"gradient_identity", 1e-3},
    {"symmetry", 1e-3},    {"flow", -1.0},        {"uniqueness", -1.0},
    {"master", 1e-3},      {"upsilon_fd_rel", 1e-3}, {"inversion_roundtrip", -1.0},
    {"initial_condition", -1.0}, {"fixed_point_residual", -1.0},
    {"contraction", 1.0},  {"terminal_condition", 0.0}, {"jacobian_min_det", 0.5},
};

void apply_key(Scenario& sc, const std::string& key, const std::string& value) {
    auto ivalue = [&] { return to_long(value, key); };
    auto dvalue = [&] { return to_double(value, key); };
    auto int_list = [&] {
        std::vector<int> out;
        for (const auto& c : split(value, ',')) out.push_back(static_cast<int>(to_long(c, key)));
        return out;
    };
    if (key == "name") sc.name = value;
    else if (key == "dimension") sc.dimension = static_cast<std::size_t>(ivalue());
    else if (key == "theta") sc.theta = dvalue();
    else if (key == "hamiltonian.type") sc.hamiltonian_type = value;
    else if (key == "hamiltonian.eps") sc.hamiltonian_eps = dvalue();
    else if (key == "running_cost.type") sc.running_cost_type = value;
    else if (key == "running_cost.amplitude") sc.running_cost_amplitude = dvalue();
    else if (key == "running_cost.kappa") sc.running_cost_kappa = dvalue();
    else if (key == "initial_cost.type") sc.initial_cost_type = value;
    else if (key == "initial_cost.value") sc.initial_cost_value = dvalue();
    else if (key == "initial_cost.amplitude") sc.initial_cost_amplitude = dvalue();
    else if (key == "initial_cost.kappa") sc.initial_cost_kappa = dvalue();
    else if (key == "initial_cost.drift") {
        sc.initial_cost_drift.clear();
        for (const auto& c : split(value, ',')) sc.initial_cost_drift.push_back(to_double(c, key));
    } else if (key == "measure.n") sc.n_particles = static_cast<std::size_t>(ivalue());
    else if (key == "measure.seed") sc.seed = static_cast<std::uint64_t>(ivalue());
    else if (key == "measure.particles") sc.particles = parse_rows(value, key);
    else if (key == "time.T") sc.T = dvalue();
    else if (key == "time.s") sc.s = dvalue();
    else if (key == "time.K") sc.K = static_cast<int>(ivalue());
    else if (key == "grid.points_per_axis") sc.grid_per_axis = static_cast<std::size_t>(ivalue());
    else if (key == "tolerances.fixed_point") sc.tol_fixed_point = dvalue();
    else if (key == "tolerances.max_iters") sc.max_iters = static_cast<int>(ivalue());
    else if (key == "tolerances.newton") sc.newton_tol = dvalue();
    else if (key == "tolerances.newton_max_iters") sc.newton_max_iters = static_cast<int>(ivalue());
    else if (key == "tolerances.fd_q") sc.fd_q = dvalue();
    else if (key == "tolerances.fd_x") sc.fd_x = dvalue();
    else if (key.rfind("checks.", 0) == 0) {
        std::string check = key.substr(7);
        if (kDefaultCheckTols.find(check) == kDefaultCheckTols.end())
            throw ConfigError("unknown check name in key '" + key + "'");
        sc.check_tolerances[check] = dvalue();
    } else if (key == "master.probes") sc.master_probes = parse_rows(value, key);
    else if (key == "master.s_values") {
        sc.master_s_values.clear();
        for (const auto& c : split(value, ',')) sc.master_s_values.push_back(to_double(c, key));
    } else if (key == "sweep.K") sc.sweep.K = int_list();
    else if (key == "sweep.grid") sc.sweep.grid = int_list();
    else if (key == "sweep.n") sc.sweep.n = int_list();
    else throw ConfigError("unknown configuration key: '" + key + "'");
}

void flatten_json(const json& j, const std::string& prefix,
                  std::vector<std::pair<std::string, std::string>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        const json& v = it.value();
        if (v.is_object()) {
            flatten_json(v, key, out);
        } else if (v.is_array()) {
            std::string joined;
            for (const auto& el : v) {
                if (el.is_array()) {
                    // row of coordinates inside a list of rows
                    std::string row;
                    for (const auto& c : el) {
                        if (!row.empty()) row += ",";
                        row += c.dump();
                    }
                    if (!joined.empty()) joined += ";";
                    joined += row;
                } else {
                    if (!joined.empty()) joined += ",";
                    joined += el.dump();
                }
            }
            out.emplace_back(key, joined);
        } else if (v.is_string()) {
            out.emplace_back(key, v.get<std::string>());
        } else {
            out.emplace_back(key, v.dump());
        }
    }
}

}  // namespace

std::size_t SweepSpec::levels() const {
    std::size_t l = std::max({K.size(), grid.size(), n.size()});
    for (auto sz : {K.size(), grid.size(), n.size()})
        if (sz != 0 && sz != l) throw ConfigError("sweep lists must have equal lengths");
    return l;
}

Scenario parse_scenario_text(const std::string& text) {
    Scenario sc;
    std::stringstream ss(text);
    std::string line, section;
    while (std::getline(ss, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value, got: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        apply_key(sc, key, value);
    }
    return sc;
}

Scenario parse_scenario_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid JSON scenario: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("JSON scenario must be an object");
    std::vector<std::pair<std::string, std::string>> kv;
    flatten_json(j, "", kv);
    Scenario sc;
    for (const auto& [k, v] : kv) apply_key(sc, k, v);
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_scenario_json(text);
    return parse_scenario_text(text);
}

SolverConfig Scenario::solver_config() const {
    SolverConfig cfg;
    cfg.T = T;
    cfg.s = s;
    cfg.K = K;
    cfg.tol_fixed_point = tol_fixed_point;
    cfg.max_iters = max_iters;
    cfg.fd_step_q = fd_q;
    cfg.fd_step_x = fd_x;
    cfg.newton_tol = newton_tol;
    cfg.newton_max_iters = newton_max_iters;
    return cfg;
}

CoefficientTriple Scenario::build_triple() const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double sqrt_d = std::sqrt(static_cast<double>(dimension));
    HamiltonianModel H;
    if (hamiltonian_type == "quadratic") H = builtin_quadratic_hamiltonian();
    else if (hamiltonian_type == "nonconvex") H = builtin_nonconvex_hamiltonian(hamiltonian_eps);
    else throw ConfigError("unknown hamiltonian.type: " + hamiltonian_type);

    CouplingModel F;
    if (running_cost_type == "none") F = builtin_constant_cost(0.0);
    else if (running_cost_type == "convolution") {
        double kappa = running_cost_kappa >= 0 ? running_cost_kappa
                                               : std::abs(running_cost_amplitude) * two_pi * sqrt_d;
        F = builtin_cosine_convolution(running_cost_amplitude, kappa);
    } else throw ConfigError("unknown running_cost.type: " + running_cost_type);

    CouplingModel g;
    if (initial_cost_type == "constant") g = builtin_constant_cost(initial_cost_value);
    else if (initial_cost_type == "cosine_grad") g = builtin_cosine_grad_cost(initial_cost_amplitude);
    else if (initial_cost_type == "convolution") {
        double kappa = initial_cost_kappa >= 0 ? initial_cost_kappa
                                               : std::abs(initial_cost_amplitude) * two_pi * sqrt_d;
        g = builtin_cosine_convolution(initial_cost_amplitude, kappa);
    } else if (initial_cost_type == "linear_drift") {
        Vec a = initial_cost_drift;
        if (a.empty()) a.assign(dimension, initial_cost_amplitude);
        if (a.size() != dimension) throw ConfigError("initial_cost.drift has wrong dimension");
        g = builtin_linear_drift_cost(a);
    } else if (initial_cost_type == "quadratic_well") {
        g = builtin_quadratic_well_cost(initial_cost_amplitude);
    } else throw ConfigError("unknown initial_cost.type: " + initial_cost_type);
    if (initial_cost_kappa >= 0) g.kappa = initial_cost_kappa;

    try {
        return CoefficientTriple::make(std::move(H), std::move(F), std::move(g), theta);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

EmpiricalMeasure Scenario::build_measure() const { return build_measure(n_particles); }

EmpiricalMeasure Scenario::build_measure(std::size_t n_override) const {
    if (!particles.empty()) {
        for (const auto& p : particles)
            if (p.size() != dimension) throw ConfigError("explicit particle has wrong dimension");
        return make_measure(particles);
    }
    if (n_override < 1) throw ConfigError("measure.n must be >= 1");
    UniformSampler rng(seed);
    std::vector<Vec> pts(n_override, Vec(dimension));
    for (auto& p : pts)
        for (double& c : p) c = rng.next();
    return make_measure(pts);
}

QueryLattice Scenario::build_lattice() const {
    return QueryLattice::uniform(dimension, grid_per_axis);
}

double Scenario::check_tolerance(const std::string& name) const {
    auto it = check_tolerances.find(name);
    if (it != check_tolerances.end()) return it->second;
    auto def = kDefaultCheckTols.find(name);
    if (def == kDefaultCheckTols.end()) throw ConfigError("unknown check name: " + name);
    double v = def->second;
    if (v >= 0) return v;
    // budget-style defaults derived from the discretization
    const double dt = T / K;
    if (name == "flow" || name == "uniqueness") return 10.0 * tol_fixed_point + 5.0 * dt * dt;
    if (name == "initial_condition") return tol_fixed_point * 10.0;
    if (name == "fixed_point_residual") return 2.0 * tol_fixed_point;
    if (name == "inversion_roundtrip") return newton_tol;
    return 1e-3;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::map<std::string, std::string> scenario_echo(const Scenario& sc) {
    std::map<std::string, std::string> m;
    m["name"] = sc.name;
    m["dimension"] = std::to_string(sc.dimension);
    m["theta"] = fmt(sc.theta);
    m["hamiltonian.type"] = sc.hamiltonian_type;
    m["hamiltonian.eps"] = fmt(sc.hamiltonian_eps);
    m["running_cost.type"] = sc.running_cost_type;
    m["running_cost.amplitude"] = fmt(sc.running_cost_amplitude);
    m["initial_cost.type"] = sc.initial_cost_type;
    m["initial_cost.value"] = fmt(sc.initial_cost_value);
    m["initial_cost.amplitude"] = fmt(sc.initial_cost_amplitude);
    m["measure.n"] = std::to_string(sc.n_particles);
    m["measure.seed"] = std::to_string(sc.seed);
    m["measure.explicit_particles"] = std::to_string(sc.particles.size());
    m["time.T"] = fmt(sc.T);
    m["time.s"] = fmt(sc.s);
    m["time.K"] = std::to_string(sc.K);
    m["grid.points_per_axis"] = std::to_string(sc.grid_per_axis);
    m["tolerances.fixed_point"] = fmt(sc.tol_fixed_point);
    m["tolerances.max_iters"] = std::to_string(sc.max_iters);
    m["tolerances.newton"] = fmt(sc.newton_tol);
    m["tolerances.fd_q"] = fmt(sc.fd_q);
    m["tolerances.fd_x"] = fmt(sc.fd_x);
    return m;
}

}  // namespace mfg
