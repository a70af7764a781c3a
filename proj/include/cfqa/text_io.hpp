#pragma once

// Small CSV helpers shared by the report writers and prediction readers.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfqa {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);
/// Formats an optional value, writing "undefined" when empty.
std::string format_optional(const std::optional<double>& v);

double parse_double(std::string_view text);
std::optional<double> parse_optional(std::string_view text);
std::uint64_t parse_uint(std::string_view text);
std::int64_t parse_int(std::string_view text);

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws FormatError if absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a CSV file whose first line is the header; blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);

/// Serializes rows with '\n' line endings.
std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

}  // namespace cfqa
