#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mfgtorus/scenario.hpp"

namespace mfg {

// %.17g formatting: round-trips doubles and is byte-stable across runs
std::string format_double(double v);

void write_field_csv(const std::filesystem::path& path, const CharacteristicField& field);
void write_solution_csv(const std::filesystem::path& path, const MfgSolution& sol);

struct ResidualRow {
    std::string check;
    int level = 0;
    int K = 0;
    std::size_t m = 0;
    double value = 0.0;
};
void write_residuals_csv(const std::filesystem::path& path, const std::vector<ResidualRow>& rows);

struct ConvergenceRow {
    std::string check;
    int level = 0;
    double value = 0.0;
    double ratio_to_previous = 0.0;  // 0 when there is no previous level
};
void write_convergence_csv(const std::filesystem::path& path,
                           const std::vector<ConvergenceRow>& rows);

// Minimal line chart: level index on x, log10(value) on y.
void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<double>& values);

struct CheckResult {
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Deterministic manifest: scenario echo, seed, version, per-check results.
// Wall time is intentionally kept out (it goes to run.log) so repeated runs
// are byte-identical.
void write_manifest(const std::filesystem::path& path, const Scenario& sc,
                    const std::string& command, const std::string& status,
                    const std::map<std::string, CheckResult>& checks,
                    const ConvergenceTrace* trace = nullptr,
                    const std::map<std::string, std::string>& extra = {});

void write_run_log(const std::filesystem::path& path, double wall_seconds);

}  // namespace mfg
