#include "failex/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "failex/error.hpp"

namespace failex::csv {
namespace {

// Returns false at end of input. Quoted fields may span lines.
bool next_record(std::istream& in, std::size_t& line, Row& row, const std::string& source) {
    row.fields.clear();
    int c = in.peek();
    if (c == std::char_traits<char>::eof()) return false;
    ++line;
    row.line = line;

    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    while (true) {
        c = in.get();
        if (c == std::char_traits<char>::eof()) {
            if (quoted) throw FormatError(source, row.line, "unterminated quoted field");
            break;
        }
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"') {
            if (!field.empty() || was_quoted)
                throw FormatError(source, row.line, "unexpected quote inside field");
            quoted = true;
            was_quoted = true;
        } else if (ch == ',') {
            row.fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else if (ch == '\n') {
            break;
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get();
            break;
        } else {
            field.push_back(ch);
        }
    }
    row.fields.push_back(std::move(field));
    return true;
}

bool blank(const Row& row) { return row.fields.size() == 1 && row.fields[0].empty(); }

}  // namespace

std::vector<Row> read(std::istream& in, const std::string& source,
                      const std::vector<std::string>& expected_header) {
    std::vector<Row> rows;
    std::size_t line = 0;
    Row row;
    bool have_header = false;
    while (next_record(in, line, row, source)) {
        if (blank(row)) continue;
        if (!have_header) {
            if (!row.fields.empty() && row.fields[0].starts_with("\xEF\xBB\xBF"))
                row.fields[0].erase(0, 3);
            if (row.fields != expected_header) {
                std::string want;
                for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
                throw FormatError(source, row.line, "expected header '" + want + "'");
            }
            have_header = true;
            continue;
        }
        if (row.fields.size() != expected_header.size())
            throw FormatError(source, row.line,
                              "expected " + std::to_string(expected_header.size()) +
                                  " fields, got " + std::to_string(row.fields.size()));
        rows.push_back(row);
    }
    if (!have_header) throw FormatError(source, 1, "missing header");
    return rows;
}

std::vector<Row> read_file(const std::string& path,
                           const std::vector<std::string>& expected_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read(in, path, expected_header);
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

double parse_double(const Row& row, std::size_t column, const std::string& source) {
    const std::string& text = row.fields.at(column);
    double value = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty())
        throw FormatError(source, row.line, "invalid number '" + text + "'");
    return value;
}

std::int64_t parse_int(const Row& row, std::size_t column, const std::string& source) {
    const std::string& text = row.fields.at(column);
    std::int64_t value = 0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty())
        throw FormatError(source, row.line, "invalid integer '" + text + "'");
    return value;
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

}  // namespace failex::csv
