#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetexp/stochcore.hpp"

// Scenario runner: YAML configuration in, CSV/JSON artifacts and a manifest out.
namespace hetexp::cli {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";

/// Every validation problem found in a configuration, one message per offending key.
class ConfigError : public InvalidInput {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Parsed and validated scenario configuration. `config` holds the normalized
/// settings with every default filled in; it is what the config hash covers.
struct ScenarioConfig {
    std::string kind;
    std::uint64_t seed = 0;
    std::string output_directory;
    std::vector<std::string> formats;
    nlohmann::json config;

    std::string hash() const;
};

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_directory;
};

/// Parses YAML text strictly. Unknown keys and blocks that the scenario kind
/// does not use are rejected.
ScenarioConfig parse_config(const std::string& yaml_text, const RunOverrides& overrides = {});
ScenarioConfig load_config(const std::string& path, const RunOverrides& overrides = {});

struct RunResult {
    std::string output_directory;
    nlohmann::json manifest;
};

/// Executes the scenario and writes its artifacts plus manifest.json.
RunResult run_scenario(const ScenarioConfig& config);
RunResult run_scenario(const std::string& config_path, const RunOverrides& overrides = {});

/// Differences between two manifests: {"config": [...], "statistics": [...]}.
/// Throws InvalidInput on schema-version mismatch or different scenario kinds.
nlohmann::json compare_runs(const nlohmann::json& a, const nlohmann::json& b);
nlohmann::json compare_manifest_files(const std::string& path_a, const std::string& path_b);

/// Machine-readable error report for a failed run.
nlohmann::json error_report(const std::exception& error);

/// Command-line entry point (`run` and `compare` subcommands).
int main(int argc, char** argv);

}  // namespace hetexp::cli
