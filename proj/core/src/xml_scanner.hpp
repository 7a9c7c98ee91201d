#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lanesurvey::detail {

struct XmlAttribute {
  std::string_view name;
  std::string value;  // entity-decoded
};

struct XmlEvent {
  enum class Kind { kStart, kEnd, kEof };

  Kind kind = Kind::kEof;
  std::string_view name;
  std::vector<XmlAttribute> attributes;
  bool self_closing = false;  // a kStart for <x/> is followed by a synthesized kEnd
  std::size_t offset = 0;

  const std::string* attribute(std::string_view key) const;
};

/// Minimal pull parser for the XML subset found in OSM extracts: elements,
/// attributes, the five named entities and numeric character references.
/// Processing instructions, comments, DOCTYPE and CDATA are skipped. Errors
/// throw XmlParseError with the byte offset of the offending construct.
class XmlScanner {
 public:
  explicit XmlScanner(std::string_view document) : doc_(document) {
    if (doc_.starts_with("\xEF\xBB\xBF")) pos_ = 3;
  }

  XmlEvent next();

  std::size_t depth() const { return stack_.size(); }

 private:
  [[noreturn]] void fail(const std::string& message, std::size_t at) const;
  void skip_whitespace();
  std::string_view read_name();
  std::string decode(std::string_view raw, std::size_t at) const;
  void skip_until(std::string_view terminator, std::size_t start, const char* what);

  std::string_view doc_;
  std::size_t pos_ = 0;
  std::vector<std::string_view> stack_;
  bool pending_end_ = false;
  std::string_view pending_name_;
  std::size_t pending_offset_ = 0;
  bool seen_root_ = false;
};

}  // namespace lanesurvey::detail
