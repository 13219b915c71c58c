#include <opticenter/manifest.hpp>

#include <fstream>

#include <opticenter/errors.hpp>

namespace opticenter {

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json doc;
  doc["command"] = manifest.command;
  doc["parameters"] = manifest.parameters;
  doc["seed"] = manifest.seed;
  doc["inputs"] = manifest.inputs;
  doc["outputs"] = manifest.outputs;
  doc["version"] = manifest.version;
  doc["duration_seconds"] = manifest.duration_seconds;
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  out << doc.dump(2) << '\n';
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid manifest '" + path + "': " + e.what());
  }
  RunManifest manifest;
  try {
    manifest.command = doc.at("command").get<std::string>();
    manifest.parameters = doc.at("parameters");
    manifest.seed = doc.at("seed").get<std::uint64_t>();
    manifest.inputs = doc.at("inputs").get<std::vector<std::string>>();
    manifest.outputs = doc.at("outputs").get<std::vector<std::string>>();
    manifest.version = doc.at("version").get<std::string>();
    manifest.duration_seconds = doc.at("duration_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + path + "' misses fields: " + e.what());
  }
  return manifest;
}

}  // namespace opticenter
