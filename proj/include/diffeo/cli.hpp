#pragma once

#include <nlohmann/json.hpp>

namespace diffeo::cli {

// Each command takes a fully merged JSON config (file values overridden by
// flags), writes its outputs plus the resolved config, and returns a summary.

nlohmann::json cmd_gen(const nlohmann::json& config);
nlohmann::json cmd_train(const nlohmann::json& config);
nlohmann::json cmd_eval(const nlohmann::json& config);
nlohmann::json cmd_dds(const nlohmann::json& config);
nlohmann::json cmd_volparam(const nlohmann::json& config);

/// Entry point of the diffeo-op executable. Exit codes: 0 success,
/// 2 validation error, 3 numerical failure.
int run(int argc, char** argv);

}  // namespace diffeo::cli
