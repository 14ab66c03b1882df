#include "depthcal/csv.hpp"

#include <fmt/format.h>

#include "depthcal/errors.hpp"

namespace depthcal {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::vector<std::string> CsvReader::header() {
  std::string text;
  if (!std::getline(in_, text)) throw ParseError("missing header", 1);
  line_ = 1;
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  auto fields = split_csv_line(text);
  width_ = fields.size();
  return fields;
}

void CsvReader::expect_header(const std::vector<std::string>& fields) {
  if (header() != fields) {
    std::string want;
    for (const auto& f : fields) want += (want.empty() ? "" : ",") + f;
    throw ParseError("expected header `" + want + "`", 1);
  }
}

std::optional<std::vector<std::string>> CsvReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(text);
    if (width_ && fields.size() != width_)
      throw ParseError(fmt::format("expected {} fields, got {}", width_, fields.size()), line_);
    return fields;
  }
  return std::nullopt;
}

double CsvReader::number(const std::vector<std::string>& row, std::size_t index) const {
  if (index >= row.size() || row[index].empty()) throw ParseError("empty numeric field", line_);
  const std::string& s = row[index];
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(fmt::format("not a number: '{}'", s), line_);
  }
  if (used != s.size()) throw ParseError(fmt::format("not a number: '{}'", s), line_);
  return v;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace depthcal
