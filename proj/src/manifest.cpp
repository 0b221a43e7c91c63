#include "bctn/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "bctn/errors.hpp"

namespace bctn {

std::string version_string() { return "bctn 0.1.0"; }

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[80];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json j{
      {"command", command},       {"config", resolved_config}, {"seed", seed},
      {"version", version_string()}, {"started_at", started_at},  {"finished_at", finished_at},
      {"outputs", outputs},
  };
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw UnwritablePath("cannot open for write: " + tmp);
    f << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bctn
