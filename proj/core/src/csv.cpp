#include "lanesurvey/csv.hpp"

#include <fstream>
#include <sstream>

#include "lanesurvey/errors.hpp"

namespace lanesurvey::csv {

std::optional<Row> split_line(std::string_view line) {
  Row fields;
  std::string current;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  if (in_quotes) return std::nullopt;
  fields.push_back(std::move(current));
  return fields;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name, std::string_view source) const {
  if (auto idx = column(name)) return *idx;
  throw InputError(std::string(source) + ": missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text, bool has_header) {
  Table table;
  std::size_t line_no = 0;
  bool header_done = !has_header;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    // UTF-8 byte-order mark on the first line.
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    auto row = split_line(line);
    if (!row) throw InputError("unterminated quote on CSV line " + std::to_string(line_no));
    if (!header_done) {
      table.header = std::move(*row);
      header_done = true;
    } else {
      table.rows.push_back(std::move(*row));
      table.line_numbers.push_back(line_no);
    }
    if (end == text.size()) break;
  }
  return table;
}

Table read_file(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), has_header);
}

}  // namespace lanesurvey::csv
