#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace failex::csv {

/// One parsed record plus the line it started on.
struct Row {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

/// RFC 4180 style reader: comma delimited, double-quote escaping, LF or CRLF.
/// The header row is checked against `expected_header` and not returned.
std::vector<Row> read(std::istream& in, const std::string& source,
                      const std::vector<std::string>& expected_header);

std::vector<Row> read_file(const std::string& path,
                           const std::vector<std::string>& expected_header);

/// Quotes a field only when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

double parse_double(const Row& row, std::size_t column, const std::string& source);
std::int64_t parse_int(const Row& row, std::size_t column, const std::string& source);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace failex::csv
