#pragma once

#include <map>
#include <string>

#include "txsim/common.hpp"

namespace txsim {

constexpr const char* kToolVersion = "0.1.0";

// Provenance block embedded in every emitted report.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  uint64_t seed = 0;
  int calib_version = 0;
  std::map<std::string, std::string> config_hashes;  // file tag -> fnv1a hex
  std::string timestamp_utc;

  void add_file_hash(const std::string& tag, const std::string& contents);
  std::string to_json() const;
};

std::string utc_timestamp();

}  // namespace txsim
