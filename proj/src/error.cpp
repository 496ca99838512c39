#include "psyprobe/error.hpp"

#include <numeric>

namespace psyprobe {
namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::string message = "invalid configuration:";
  for (const auto& v : violations) message += "\n  - " + v;
  return message;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

}  // namespace psyprobe
