#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>
#include <string>

namespace aclready::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(ACLREADY_FIXTURES_DIR) / name;
}

inline std::filesystem::path golden_path(const std::string& name) {
  return std::filesystem::path(ACLREADY_GOLDEN_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixture(const std::string& name) { return slurp(fixture_path(name)); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("aclready-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace aclready::testing
