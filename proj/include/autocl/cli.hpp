#ifndef AUTOCL_CLI_HPP
#define AUTOCL_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace autocl::cli {

// Every recognised run-config key with its default. Config files and
// `--set` overrides may only touch keys present here.
nlohmann::json default_run_config();

// Reads a run config: a JSON object, or `key = value` lines with dotted keys
// ("train.lr = 1e-4"), '#' comments and JSON-or-bare-string values.
nlohmann::json read_config_file(const std::filesystem::path& path);

// Overlays `patch` onto `base`. Keys absent from `base` are rejected with
// their dotted path.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

// Applies "a.b.c=value" to `config`.
void apply_assignment(nlohmann::json& config, const std::string& assignment);

// Entry point. Returns the process exit code; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace autocl::cli

#endif  // AUTOCL_CLI_HPP
