#include "txsim/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include <nlohmann/json.hpp>

namespace txsim {

void RunManifest::add_file_hash(const std::string& tag, const std::string& contents) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(contents)));
  config_hashes[tag] = buf;
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["tool_version"] = tool_version;
  j["command"] = command;
  j["seed"] = seed;
  j["calib_version"] = calib_version;
  j["config_hashes"] = config_hashes;
  j["timestamp_utc"] = timestamp_utc;
  return j.dump();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace txsim
