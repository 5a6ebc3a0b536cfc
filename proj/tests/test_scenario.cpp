#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mfgtorus/runner.hpp"

using namespace mfg;
namespace fs = std::filesystem;

namespace {

const std::string kScenarioDir = std::string(MFGTORUS_SOURCE_DIR) + "/scenarios/";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "mfgtorus_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("scenario parsing: sections, json, and unknown keys") {
    auto sc = load_scenario(kScenarioDir + "oracle1d.cfg");
    CHECK(sc.name == "oracle1d");
    CHECK(sc.dimension == 1);
    CHECK(sc.K == 160);
    CHECK(sc.grid_per_axis == 64);
    CHECK(sc.initial_cost_type == "cosine_grad");
    CHECK(sc.sweep.K.size() == 4);

    auto js = parse_scenario_json(R"({
        "name": "j1",
        "dimension": 1,
        "theta": 4,
        "initial_cost": {"type": "cosine_grad", "amplitude": 0.05},
        "time": {"T": 0.1, "s": 0.1, "K": 40},
        "measure": {"n": 4, "seed": 2}
    })");
    CHECK(js.name == "j1");
    CHECK(js.K == 40);
    CHECK(js.initial_cost_amplitude == doctest::Approx(0.05));

    // nested row lists survive the JSON flattening
    auto jp = parse_scenario_json(R"({
        "dimension": 2,
        "measure": {"particles": [[0.1, 0.2], [0.7, 0.8], [0.4, 0.5]]},
        "sweep": {"K": [10, 20]}
    })");
    REQUIRE(jp.particles.size() == 3);
    CHECK(jp.particles[1][0] == doctest::Approx(0.7));
    CHECK(jp.particles[2][1] == doctest::Approx(0.5));
    CHECK(jp.sweep.K == std::vector<int>{10, 20});
    CHECK(jp.build_measure().size() == 3);

    CHECK_THROWS_AS(parse_scenario_text("no_such_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_json(R"({"time": {"Q": 3}})"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_text("dimension = banana\n"), ConfigError);
}

TEST_CASE("seeded measures are reproducible and explicit lists win") {
    auto sc = load_scenario(kScenarioDir + "conv1d.cfg");
    auto m1 = sc.build_measure();
    auto m2 = sc.build_measure();
    REQUIRE(m1.size() == m2.size());
    for (std::size_t j = 0; j < m1.size(); ++j)
        CHECK(m1.particles[j][0] == m2.particles[j][0]);

    Scenario sc2 = sc;
    sc2.particles = {{0.1}, {0.9}};
    auto m3 = sc2.build_measure();
    CHECK(m3.size() == 2);
    CHECK(m3.particles[0][0] == doctest::Approx(0.1));
}

TEST_CASE("theta gate is enforced at scenario build time") {
    Scenario sc = load_scenario(kScenarioDir + "oracle1d.cfg");
    sc.theta = 1.0;  // below the floor for kappa = 0.05 * 2 pi
    CHECK_THROWS_AS(sc.build_triple(), ConfigError);
}

TEST_CASE("run_solve writes dumps and the divergent scenario exits 2") {
    auto sc = load_scenario(kScenarioDir + "trivial.cfg");
    auto dir = fresh_dir("solve_trivial");
    CHECK(run_solve(sc, dir) == 0);
    CHECK(fs::exists(dir / "field.csv"));
    CHECK(fs::exists(dir / "solution.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
    auto manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"converged\"") != std::string::npos);

    auto bad = load_scenario(kScenarioDir + "diverge.cfg");
    auto dir2 = fresh_dir("solve_diverge");
    CHECK(run_solve(bad, dir2) == 2);
    auto manifest2 = slurp(dir2 / "manifest.json");
    CHECK(manifest2.find("no_convergence") != std::string::npos);
    CHECK(manifest2.find("ratios") != std::string::npos);
}

TEST_CASE("run_verify on the trivial scenario passes every check") {
    auto sc = load_scenario(kScenarioDir + "trivial.cfg");
    auto dir = fresh_dir("verify_trivial");
    CHECK(run_verify(sc, dir) == 0);
    CHECK(fs::exists(dir / "residuals.csv"));
    auto manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"pass\"") != std::string::npos);
}

TEST_CASE("run_verify on conv2d includes a passing symmetry check") {
    auto sc = load_scenario(kScenarioDir + "conv2d.cfg");
    auto dir = fresh_dir("verify_conv2d");
    CHECK(run_verify(sc, dir) == 0);
    auto csv = slurp(dir / "residuals.csv");
    CHECK(csv.find("symmetry,") != std::string::npos);
    auto manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"pass\"") != std::string::npos);
}

TEST_CASE("run_master on the measure-coupled sweep emits decreasing residuals") {
    auto sc = load_scenario(kScenarioDir + "conv1d.cfg");
    sc.master_probes = {{0.3}};  // one probe keeps this quick
    auto dir = fresh_dir("master_conv1d");
    CHECK(run_master(sc, dir) == 0);
    auto csv = slurp(dir / "master.csv");
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // header
    std::vector<double> residuals;
    while (std::getline(ss, line)) {
        auto pos = line.rfind(',');
        auto pos2 = line.rfind(',', pos - 1);
        residuals.push_back(std::abs(std::stod(line.substr(pos2 + 1, pos - pos2 - 1))));
    }
    REQUIRE(residuals.size() == 3);  // one row per sweep level
    CHECK(residuals[1] <= residuals[0]);
    CHECK(residuals[2] <= residuals[1]);
}

TEST_CASE("byte-identical reruns") {
    auto sc = load_scenario(kScenarioDir + "trivial.cfg");
    auto d1 = fresh_dir("det_a");
    auto d2 = fresh_dir("det_b");
    CHECK(run_solve(sc, d1) == 0);
    CHECK(run_solve(sc, d2) == 0);
    for (const char* f : {"field.csv", "solution.csv", "manifest.json"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));
}

TEST_CASE("convergence sweep with a single level emits empty ratios") {
    auto sc = load_scenario(kScenarioDir + "trivial.cfg");
    sc.sweep.K = {40};
    sc.sweep.grid = {8};
    auto dir = fresh_dir("conv_single");
    CHECK(run_convergence(sc, dir) == 0);
    auto csv = slurp(dir / "convergence.csv");
    CHECK(csv.find("hjb,0,") != std::string::npos);
    // the single level has no predecessor: the ratio column is empty
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // header
    while (std::getline(ss, line)) CHECK(line.back() == ',');
}
