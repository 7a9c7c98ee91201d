#include "xml_scanner.hpp"

#include <charconv>

#include "lanesurvey/errors.hpp"

namespace lanesurvey::detail {
namespace {

bool is_name_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' ||
         static_cast<unsigned char>(c) >= 0x80;
}

bool is_name_char(char c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

const std::string* XmlEvent::attribute(std::string_view key) const {
  for (const auto& a : attributes) {
    if (a.name == key) return &a.value;
  }
  return nullptr;
}

void XmlScanner::fail(const std::string& message, std::size_t at) const {
  throw XmlParseError(message, at);
}

void XmlScanner::skip_whitespace() {
  while (pos_ < doc_.size() && is_space(doc_[pos_])) ++pos_;
}

std::string_view XmlScanner::read_name() {
  const std::size_t start = pos_;
  if (pos_ >= doc_.size() || !is_name_start(doc_[pos_])) fail("expected a name", pos_);
  while (pos_ < doc_.size() && is_name_char(doc_[pos_])) ++pos_;
  return doc_.substr(start, pos_ - start);
}

std::string XmlScanner::decode(std::string_view raw, std::size_t at) const {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (c == '<') fail("'<' inside attribute value", at + i);
    if (c != '&') {
      out.push_back(c);
      continue;
    }
    const std::size_t semi = raw.find(';', i);
    if (semi == std::string_view::npos) fail("unterminated entity reference", at + i);
    const std::string_view ent = raw.substr(i + 1, semi - i - 1);
    if (ent == "amp") {
      out.push_back('&');
    } else if (ent == "lt") {
      out.push_back('<');
    } else if (ent == "gt") {
      out.push_back('>');
    } else if (ent == "quot") {
      out.push_back('"');
    } else if (ent == "apos") {
      out.push_back('\'');
    } else if (ent.size() >= 2 && ent[0] == '#') {
      unsigned long cp = 0;
      const bool hex = ent[1] == 'x' || ent[1] == 'X';
      const char* first = ent.data() + (hex ? 2 : 1);
      const char* last = ent.data() + ent.size();
      auto [ptr, ec] = std::from_chars(first, last, cp, hex ? 16 : 10);
      if (ec != std::errc() || ptr != last || first == last || cp > 0x10FFFF) {
        fail("bad character reference", at + i);
      }
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ent) + ";'", at + i);
    }
    i = semi;
  }
  return out;
}

void XmlScanner::skip_until(std::string_view terminator, std::size_t start, const char* what) {
  const std::size_t end = doc_.find(terminator, pos_);
  if (end == std::string_view::npos) fail(std::string("unterminated ") + what, start);
  pos_ = end + terminator.size();
}

XmlEvent XmlScanner::next() {
  if (pending_end_) {
    pending_end_ = false;
    XmlEvent ev;
    ev.kind = XmlEvent::Kind::kEnd;
    ev.name = pending_name_;
    ev.offset = pending_offset_;
    return ev;
  }

  while (true) {
    // Character data between elements is ignored; OSM carries none.
    while (pos_ < doc_.size() && doc_[pos_] != '<') {
      if (stack_.empty() && !is_space(doc_[pos_])) fail("text outside the root element", pos_);
      ++pos_;
    }
    if (pos_ >= doc_.size()) {
      if (!stack_.empty()) fail("unclosed element <" + std::string(stack_.back()) + ">", doc_.size());
      if (!seen_root_) fail("document has no root element", doc_.size());
      XmlEvent ev;
      ev.kind = XmlEvent::Kind::kEof;
      ev.offset = doc_.size();
      return ev;
    }

    const std::size_t start = pos_;
    const std::string_view rest = doc_.substr(pos_);
    if (rest.starts_with("<?")) {
      pos_ += 2;
      skip_until("?>", start, "processing instruction");
      continue;
    }
    if (rest.starts_with("<!--")) {
      pos_ += 4;
      skip_until("-->", start, "comment");
      continue;
    }
    if (rest.starts_with("<![CDATA[")) {
      pos_ += 9;
      skip_until("]]>", start, "CDATA section");
      continue;
    }
    if (rest.starts_with("<!")) {
      pos_ += 2;
      skip_until(">", start, "declaration");
      continue;
    }

    if (rest.starts_with("</")) {
      pos_ += 2;
      const std::string_view name = read_name();
      skip_whitespace();
      if (pos_ >= doc_.size() || doc_[pos_] != '>') fail("expected '>' in end tag", pos_);
      ++pos_;
      if (stack_.empty()) fail("unexpected end tag </" + std::string(name) + ">", start);
      if (stack_.back() != name) {
        fail("mismatched end tag </" + std::string(name) + ">, expected </" + std::string(stack_.back()) + ">",
             start);
      }
      stack_.pop_back();
      XmlEvent ev;
      ev.kind = XmlEvent::Kind::kEnd;
      ev.name = name;
      ev.offset = start;
      return ev;
    }

    ++pos_;
    XmlEvent ev;
    ev.kind = XmlEvent::Kind::kStart;
    ev.offset = start;
    if (stack_.empty() && seen_root_) fail("second root element", start);
    ev.name = read_name();
    while (true) {
      skip_whitespace();
      if (pos_ >= doc_.size()) fail("unterminated start tag <" + std::string(ev.name) + ">", start);
      const char c = doc_[pos_];
      if (c == '/') {
        if (pos_ + 1 >= doc_.size() || doc_[pos_ + 1] != '>') fail("expected '/>'", pos_);
        pos_ += 2;
        ev.self_closing = true;
        break;
      }
      if (c == '>') {
        ++pos_;
        break;
      }
      const std::size_t attr_at = pos_;
      const std::string_view attr_name = read_name();
      skip_whitespace();
      if (pos_ >= doc_.size() || doc_[pos_] != '=') fail("expected '=' after attribute name", pos_);
      ++pos_;
      skip_whitespace();
      if (pos_ >= doc_.size() || (doc_[pos_] != '"' && doc_[pos_] != '\'')) {
        fail("expected quoted attribute value", pos_);
      }
      const char quote = doc_[pos_++];
      const std::size_t value_start = pos_;
      const std::size_t value_end = doc_.find(quote, pos_);
      if (value_end == std::string_view::npos) fail("unterminated attribute value", attr_at);
      pos_ = value_end + 1;
      for (const auto& existing : ev.attributes) {
        if (existing.name == attr_name) fail("duplicate attribute '" + std::string(attr_name) + "'", attr_at);
      }
      ev.attributes.push_back(
          {attr_name, decode(doc_.substr(value_start, value_end - value_start), value_start)});
    }
    seen_root_ = true;
    if (ev.self_closing) {
      pending_end_ = true;
      pending_name_ = ev.name;
      pending_offset_ = start;
    } else {
      stack_.push_back(ev.name);
    }
    return ev;
  }
}

}  // namespace lanesurvey::detail
