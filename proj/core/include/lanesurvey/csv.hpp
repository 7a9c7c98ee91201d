#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace lanesurvey::csv {

using Row = std::vector<std::string>;

/// Splits one CSV record (RFC 4180 quoting). Returns nullopt on an unterminated quote.
std::optional<Row> split_line(std::string_view line);

/// Writes one record, quoting fields that need it.
void write_row(std::ostream& out, const Row& fields);

std::string escape(std::string_view field);

/// A parsed table: header plus data rows with their 1-based line numbers.
struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;

  /// Column index by name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  /// Column index by name; throws InputError naming `source` when absent.
  std::size_t require_column(std::string_view name, std::string_view source) const;
};

/// Parses text. Blank lines are skipped; a line with an unterminated quote
/// throws InputError.
Table parse(std::string_view text, bool has_header = true);

/// Reads and parses a file. Throws IoError if unreadable.
Table read_file(const std::filesystem::path& path, bool has_header = true);

}  // namespace lanesurvey::csv
