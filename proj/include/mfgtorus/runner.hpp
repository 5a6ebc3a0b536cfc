#pragma once

#include "mfgtorus/reporting.hpp"

namespace mfg {

// Command drivers shared by the CLI and the tests. Each writes its outputs
// under outdir and returns the process exit code: 0 success, 2
// no-convergence (ratio history lands in the manifest), 4 check failure.
// Configuration errors throw ConfigError (mapped to exit 3 by the CLI).
int run_solve(const Scenario& sc, const std::filesystem::path& outdir);
int run_verify(const Scenario& sc, const std::filesystem::path& outdir);
int run_master(const Scenario& sc, const std::filesystem::path& outdir);
int run_convergence(const Scenario& sc, const std::filesystem::path& outdir);

}  // namespace mfg
