#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace opticenter {

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one CLI run: the command, its fully resolved parameters, and
/// the files it touched. Written alongside every command's outputs; the
/// `replay` command re-executes a manifest. duration_seconds is the one
/// field excluded from byte-identical rerun guarantees.
struct RunManifest {
  std::string command;
  nlohmann::json parameters;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = kToolVersion;
  double duration_seconds = 0.0;
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace opticenter
