#include "lanesurvey/errors.hpp"

namespace lanesurvey {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig:
      return "configuration";
    case ErrorCategory::kUpstream:
      return "missing-artifact";
    case ErrorCategory::kInput:
      return "input";
    case ErrorCategory::kIo:
      return "io";
    case ErrorCategory::kExternal:
      return "external";
    case ErrorCategory::kDomain:
      return "domain";
  }
  return "unknown";
}

}  // namespace lanesurvey
