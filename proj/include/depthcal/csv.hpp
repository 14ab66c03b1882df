#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace depthcal {

/// Minimal comma-separated reader: no quoting, fields trimmed, blank lines skipped.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  /// Reads the first line and returns its fields (UTF-8 BOM stripped).
  std::vector<std::string> header();
  /// Throws ParseError unless the header matches exactly.
  void expect_header(const std::vector<std::string>& fields);

  /// Next data row; std::nullopt at end of input.
  std::optional<std::vector<std::string>> next();

  double number(const std::vector<std::string>& row, std::size_t index) const;
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t width_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line);

/// Quotes a field when it contains a comma, quote or newline.
std::string csv_escape(const std::string& field);

}  // namespace depthcal
