#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace dvelab {

/// Formats a double with 17 significant digits; -0 prints as 0.
std::string format_double(double v);

/// RFC-4180 field quoting.
std::string csv_escape(std::string_view field);

/// Minimal CSV writer: header row first, CRLF line endings.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);

  CsvWriter& field(std::string_view text);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
  CsvWriter& empty();
  void end_row();

 private:
  std::ostream& out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

/// Parses RFC-4180 text into rows of fields (quotes honored, CRLF or LF).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace dvelab
