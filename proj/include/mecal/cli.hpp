#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mecal/core_model.hpp"

namespace mecal {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitFit = 3;

/// Entry point behind the `mecal` executable: fit, simulate, report.
/// Results go to --out (or `out`); messages and warnings go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

nlohmann::ordered_json fit_result_json(const FitResult& f, const std::vector<std::string>& covariate_names);

/// Drops provenance fields that legitimately differ between identical runs.
nlohmann::ordered_json strip_timing(nlohmann::ordered_json results);

}  // namespace mecal
