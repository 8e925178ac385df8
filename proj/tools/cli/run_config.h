#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

// Layered run configuration: built-in defaults, then a TOML or JSON config
// file, then command-line flags. Only the section of the active command
// (plus the global keys) forms the effective config.
namespace ldn::cli {

// Command name -> config section ("dataset build" -> "dataset").
std::string section_of(const std::string& command);

// Every section with its defaults, plus global `seed` and `out`.
const nlohmann::json& default_config();

// Parses a config file (.json as JSON, anything else as TOML with a JSON
// fallback). Throws UsageError on syntax errors.
nlohmann::json read_config_file(const std::filesystem::path& path);

// Overlays `overrides` onto `base`. Unknown keys and type mismatches throw
// UsageError naming the key; integers are accepted for real-valued keys.
void merge_config(nlohmann::json& base, const nlohmann::json& overrides,
                  const std::string& prefix = "");

// Global keys plus the command's section.
nlohmann::json effective_config(const nlohmann::json& full,
                                const std::string& command);

// SHA-256 of the canonical (sorted-key, compact) dump.
std::string config_hash(const nlohmann::json& config);

// Pretty, sorted-key dump followed by a newline.
std::string dump_config(const nlohmann::json& config);

}  // namespace ldn::cli
