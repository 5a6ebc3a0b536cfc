#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mfgtorus/master.hpp"
#include "mfgtorus/scenario.hpp"

namespace py = pybind11;
using namespace mfg;

namespace {

EmpiricalMeasure measure_from_lists(const std::vector<Vec>& particles) {
    return make_measure(particles);
}

std::vector<Vec> measure_to_lists(const EmpiricalMeasure& mu) {
    std::vector<Vec> out;
    out.reserve(mu.size());
    for (const auto& p : mu.particles) out.push_back(p.coords);
    return out;
}

}  // namespace

PYBIND11_MODULE(_mfgtorus, m) {
    m.doc() = "characteristic-based solver for short-time mean field games on the flat torus";
    m.attr("__version__") = kVersion;

    py::register_exception<NoConvergenceError>(m, "NoConvergenceError");
    py::register_exception<InversionError>(m, "InversionError");

    m.def("wrap", [](const Vec& v) { return wrap(v).coords; }, py::arg("v"),
          "canonicalize a point into [0,1)^d");
    m.def("min_displacement",
          [](const Vec& x, const Vec& y) { return min_displacement(wrap(x), wrap(y)).components; },
          py::arg("x"), py::arg("y"));
    m.def("torus_dist", [](const Vec& x, const Vec& y) { return torus_dist(wrap(x), wrap(y)); },
          py::arg("x"), py::arg("y"));

    py::class_<EmpiricalMeasure>(m, "EmpiricalMeasure")
        .def(py::init(&measure_from_lists), py::arg("particles"))
        .def_property_readonly("particles", &measure_to_lists)
        .def("__len__", &EmpiricalMeasure::size)
        .def_property_readonly("dim", &EmpiricalMeasure::dim);

    py::class_<TransportPlan>(m, "TransportPlan")
        .def_readonly("assignment", &TransportPlan::assignment)
        .def_readonly("cost", &TransportPlan::cost)
        .def("distance", &TransportPlan::distance);

    m.def("wasserstein",
          [](const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, bool brute_force) {
              return wasserstein(mu, nu,
                                 brute_force ? AssignmentMethod::brute_force
                                             : AssignmentMethod::hungarian);
          },
          py::arg("mu"), py::arg("nu"), py::arg("brute_force") = false);
    m.def("geodesic_interpolate", &geodesic_interpolate, py::arg("plan"), py::arg("tau"));
    m.def("displacement_velocity", &displacement_velocity, py::arg("plan"), py::arg("tau"));

    py::class_<SolverConfig>(m, "SolverConfig")
        .def(py::init<>())
        .def_readwrite("T", &SolverConfig::T)
        .def_readwrite("s", &SolverConfig::s)
        .def_readwrite("K", &SolverConfig::K)
        .def_readwrite("tol_fixed_point", &SolverConfig::tol_fixed_point)
        .def_readwrite("max_iters", &SolverConfig::max_iters)
        .def_readwrite("fd_step_q", &SolverConfig::fd_step_q)
        .def_readwrite("fd_step_x", &SolverConfig::fd_step_x)
        .def_readwrite("newton_tol", &SolverConfig::newton_tol)
        .def_readwrite("newton_max_iters", &SolverConfig::newton_max_iters);

    py::class_<CoefficientTriple>(m, "CoefficientTriple")
        .def_readonly("theta", &CoefficientTriple::theta)
        .def("kappa", &CoefficientTriple::kappa);

    m.def("quadratic_triple",
          [](double g_amplitude, double theta) {
              return CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                             builtin_constant_cost(0.0),
                                             builtin_cosine_grad_cost(g_amplitude), theta);
          },
          py::arg("g_amplitude") = 0.05, py::arg("theta") = 4.0,
          "quadratic Hamiltonian, no running cost, cosine initial-cost gradient");
    m.def("convolution_triple",
          [](std::size_t d, double amplitude, double theta) {
              const double kappa =
                  amplitude * 2.0 * 3.14159265358979323846 * std::sqrt(static_cast<double>(d));
              return CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                             builtin_cosine_convolution(amplitude, kappa),
                                             builtin_cosine_convolution(amplitude, kappa), theta);
          },
          py::arg("d") = 1, py::arg("amplitude") = 0.05, py::arg("theta") = 4.0,
          "quadratic Hamiltonian with convolution running and initial costs");
    m.def("constant_triple",
          [](double value, double theta) {
              return CoefficientTriple::make(builtin_quadratic_hamiltonian(),
                                             builtin_constant_cost(0.0),
                                             builtin_constant_cost(value), theta);
          },
          py::arg("value") = 1.0, py::arg("theta") = 2.0);

    py::class_<ConvergenceTrace>(m, "ConvergenceTrace")
        .def_readonly("diffs", &ConvergenceTrace::diffs)
        .def_readonly("ratios", &ConvergenceTrace::ratios)
        .def_readonly("iterations", &ConvergenceTrace::iterations)
        .def_readonly("final_diff", &ConvergenceTrace::final_diff);

    py::class_<CharacteristicField>(m, "CharacteristicField")
        .def_property_readonly("trace",
                               [](const CharacteristicField& f) { return f.trace; })
        .def_property_readonly("K", &CharacteristicField::K)
        .def("t", &CharacteristicField::t)
        .def("s_index", &CharacteristicField::s_index)
        .def("n_particles", &CharacteristicField::n_particles)
        .def("n_points", &CharacteristicField::n_points)
        .def("sigma1",
             [](const CharacteristicField& f, int k, std::size_t pt) {
                 return f.sigma1[k][pt].coords;
             },
             py::arg("k"), py::arg("pt"))
        .def("sigma2",
             [](const CharacteristicField& f, int k, std::size_t pt) { return f.sigma2[k][pt]; },
             py::arg("k"), py::arg("pt"))
        .def("measure_at", &CharacteristicField::measure_at, py::arg("k"));

    m.def("solve",
          [](const CoefficientTriple& triple, const SolverConfig& cfg,
             const EmpiricalMeasure& mu, const std::vector<Vec>& queries) {
              std::vector<TorusPoint> qs;
              qs.reserve(queries.size());
              for (const auto& q : queries) qs.push_back(wrap(q));
              return solve(triple, cfg, mu, qs);
          },
          py::arg("triple"), py::arg("config"), py::arg("mu"),
          py::arg("queries") = std::vector<Vec>{});

    m.def("vee_field",
          [](const CharacteristicField& f, const CoefficientTriple& triple, int k, const Vec& q) {
              return vee_field(f, triple, k, wrap(q));
          },
          py::arg("field"), py::arg("triple"), py::arg("k"), py::arg("q"));
    m.def("invert_flow",
          [](const CharacteristicField& f, const CoefficientTriple& triple, int k, const Vec& q) {
              return invert_flow(f, triple, k, wrap(q)).coords;
          },
          py::arg("field"), py::arg("triple"), py::arg("k"), py::arg("q"));

    m.def("evaluate_u",
          [](const CoefficientTriple& triple, const SolverConfig& cfg,
             const EmpiricalMeasure& mu, const Vec& q) {
              return evaluate_u(triple, cfg, mu, wrap(q));
          },
          py::arg("triple"), py::arg("config"), py::arg("mu"), py::arg("q"));
    m.def("grad_q_u",
          [](const CoefficientTriple& triple, const SolverConfig& cfg,
             const EmpiricalMeasure& mu, const Vec& q) {
              return grad_q_u(triple, cfg, mu, wrap(q));
          },
          py::arg("triple"), py::arg("config"), py::arg("mu"), py::arg("q"));
    m.def("upsilon",
          [](const CoefficientTriple& triple, const SolverConfig& cfg,
             const EmpiricalMeasure& mu, const Vec& q, std::size_t j) {
              return upsilon(triple, cfg, mu, wrap(q), j);
          },
          py::arg("triple"), py::arg("config"), py::arg("mu"), py::arg("q"), py::arg("j"));
    m.def("master_residual",
          [](const CoefficientTriple& triple, const SolverConfig& cfg,
             const EmpiricalMeasure& mu, const Vec& q) {
              return master_residual(triple, cfg, mu, wrap(q));
          },
          py::arg("triple"), py::arg("config"), py::arg("mu"), py::arg("q"));
}
