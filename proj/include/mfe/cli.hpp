#pragma once

#include "mfe/io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mfe {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double bound = 0.0;
  std::string detail;
};

struct ArtifactRecord {
  std::string file;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Everything needed to rerun a command and audit its outputs.
struct RunManifest {
  std::string command;
  Json config;
  std::string started;
  std::string finished;
  std::vector<ArtifactRecord> artifacts;
  std::vector<Check> checks;
  std::vector<std::string> errors;

  /// At least one check, all passed, no recorded failure.
  [[nodiscard]] bool passed() const;
  [[nodiscard]] Json to_json() const;
};

const std::vector<std::string>& command_names();

/// Full config for a command with every field at its default.
Json default_config(const std::string& command);

/// Defaults overlaid with the user config. domain and measure are replaced
/// whole; other sections are merged key by key and unknown keys rejected.
/// A run manifest is accepted too: its config snapshot is used.
Json resolve_config(const std::string& command, const Json& user);

/// "section.key=value" with value parsed as JSON, else taken as a string.
void apply_override(Json& config, const std::string& assignment);

/// $MFE_OUTPUT_ROOT, else ./runs.
std::filesystem::path default_output_root();

/// Runs a resolved config and writes artifacts plus manifest.json into out_dir.
/// Config errors throw ConfigError; numerical failures land in the manifest.
RunManifest run(const std::string& command, const Json& config, const std::filesystem::path& out_dir);

}  // namespace mfe
