#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lanesurvey {

/// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorCategory {
  kConfig,      // bad or missing configuration
  kUpstream,    // an artifact another command should have produced is absent
  kInput,       // malformed input data (XML, CSV, NMEA, images)
  kIo,          // filesystem failure
  kExternal,    // detector adapter, HTTP endpoint
  kDomain,      // precondition of a numerical operation violated
};

std::string_view to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

/// Raised when a command needs an artifact that another command produces.
class UpstreamError : public Error {
 public:
  UpstreamError(const std::string& artifact, const std::string& producer)
      : Error(ErrorCategory::kUpstream,
              "missing " + artifact + "; run `lanesurvey " + producer + "` first"),
        artifact_(artifact),
        producer_(producer) {}

  const std::string& artifact() const noexcept { return artifact_; }
  const std::string& producer() const noexcept { return producer_; }

 private:
  std::string artifact_;
  std::string producer_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCategory::kInput, what) {}
};

/// Malformed XML. `offset()` is the byte offset into the document.
class XmlParseError : public InputError {
 public:
  XmlParseError(const std::string& message, std::size_t offset)
      : InputError("XML parse error at byte " + std::to_string(offset) + ": " + message),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

class ExternalError : public Error {
 public:
  explicit ExternalError(const std::string& what) : Error(ErrorCategory::kExternal, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::kDomain, what) {}
};

}  // namespace lanesurvey
