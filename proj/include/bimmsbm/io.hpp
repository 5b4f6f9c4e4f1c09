#pragma once
// CSV reading and lossless number formatting shared by the file formats.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bimmsbm::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::string source;
};

/// Comma-separated, optional double quotes, blank lines skipped. Every row
/// must have as many fields as the header.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text, std::string source = "<memory>");

double parse_double(std::string_view field, const CsvTable& table, std::size_t row);

/// Shortest representation that round-trips exactly.
std::string format_double(double v);

std::string csv_escape(std::string_view field);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace bimmsbm::io
