// manifest.hpp
// Run manifests: every command serializes its fully resolved configuration,
// seeds, input/output digests and timings next to its outputs, and can be
// re-executed from the manifest to reproduce the outputs byte-identically
// (timing fields excluded from the comparison).

#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "gmedetect/common.hpp"

namespace gme {

struct FileRecord {
  std::string path;
  std::string digest;  // fnv1a64 hex of the file bytes
};

struct RunManifest {
  std::string tool = kToolName;
  std::string version = kToolVersion;
  std::string command;
  std::vector<std::string> argv;  // tokens after the program name
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  int64_t wall_ms = 0;
  int thread_cap = 0;

  void add_input(const std::filesystem::path& p) {
    inputs.push_back({p.string(), hex64(file_digest(p))});
  }
  void add_output(const std::filesystem::path& p) {
    outputs.push_back({p.string(), hex64(file_digest(p))});
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = tool;
    j["version"] = version;
    j["command"] = command;
    j["argv"] = argv;
    auto files = [](const std::vector<FileRecord>& v) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& f : v) arr.push_back({{"path", f.path}, {"digest", f.digest}});
      return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["timings"] = {{"wall_ms", wall_ms}};
    j["thread_cap"] = thread_cap;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.tool = j.at("tool").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    auto files = [](const nlohmann::json& arr) {
      std::vector<FileRecord> v;
      for (const auto& f : arr)
        v.push_back({f.at("path").get<std::string>(), f.at("digest").get<std::string>()});
      return v;
    };
    m.inputs = files(j.at("inputs"));
    m.outputs = files(j.at("outputs"));
    if (j.contains("timings")) m.wall_ms = j["timings"].value("wall_ms", int64_t{0});
    m.thread_cap = j.value("thread_cap", 0);
    return m;
  }

  void save(const std::filesystem::path& path) const {
    atomic_write_file(path, to_json().dump(2) + "\n");
  }

  static RunManifest load(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(read_file(path)));
  }
};

inline std::filesystem::path manifest_path_for(const std::filesystem::path& out) {
  std::filesystem::path p = out;
  p += ".manifest.json";
  return p;
}

}  // namespace gme
