#pragma once

// Command-line surface. Each compute command writes CSV/report files and a
// run manifest (<command>_manifest.json) holding the full config, the
// command options, input digests, output digests, seed, version and wall
// time; `replay` re-executes a manifest and verifies the outputs bit for bit.
//
// Exit codes: 0 success, 2 usage, 3 invalid input, 4 numerical failure,
// 1 anything else. Failures print one JSON object on a line starting with
// "error: " to the error stream.

#include <iosfwd>
#include <string>
#include <vector>

namespace rabi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitNumerical = 4;

/// `args` excludes the program name; args[0] is the subcommand.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Analytic-oracle checks: Rabi formulas, free decay, steady state, Gaussian
/// area, photon budget and the random generator's known answers.
std::vector<SelftestCheck> run_selftest();

}  // namespace rabi
