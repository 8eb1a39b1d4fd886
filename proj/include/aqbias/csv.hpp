#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace aqbias::csv {

/// Splits one line on commas. No quoting: fields never contain commas.
std::vector<std::string> split(std::string_view line);

/// Reads a header line and data lines, skipping blank lines and lines that
/// start with '#'. Every data line must have as many fields as the header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;  // FormatError if absent
};
Table read(std::istream& in, const std::string& source);
Table read_file(const std::string& path);

/// Strict double parse; "nan" / "NaN" / "" give NaN. FormatError otherwise.
double to_double(const std::string& field, const std::string& context);

/// Shortest text that reads back to the same double ("nan" for NaN).
std::string format_double(double v);

}  // namespace aqbias::csv
