#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace bctn {

// One JSON file per CLI run, enough to reproduce it: command, resolved
// config, seed, version, wall-clock bounds, produced files. Written
// atomically (tmp + rename) next to the outputs.
struct RunManifest {
  std::string command;
  nlohmann::json resolved_config;
  uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;

  void write(const std::string& path) const;
};

std::string version_string();
std::string now_iso8601();

}  // namespace bctn
