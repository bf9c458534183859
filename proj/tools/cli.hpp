#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfot/matcher.hpp"
#include "sfot/metrics.hpp"
#include "sfot/tracker.hpp"

namespace sfot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitInternal = 3;

/// Runs one invocation of the command-line tool. args excludes the program
/// name. Never throws; errors are reported on stderr and mapped to exit codes.
int run(const std::vector<std::string>& args);

// Pieces shared with tests.
std::string eval_to_json(const std::map<std::string, EvalResult>& evals,
                         const std::map<std::string, std::map<Attribute, EvalResult>>& breakdowns);
std::string curve_csv(const Curve& c);
std::string precision_svg(const std::map<std::string, EvalResult>& evals);
std::string success_svg(const std::map<std::string, EvalResult>& evals);
std::map<std::string, EvalResult> evals_from_json(const std::string& text);

}  // namespace sfot::cli
