#include "defectmet/csv.hpp"

#include <charconv>
#include <cstdlib>

#include "defectmet/errors.hpp"

namespace defectmet {

std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
    double value = 0.0;
    const char* begin = text.c_str();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ParseError("not a number: \"" + text + "\" (" + context + ")");
    }
    return value;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string write_csv(const CsvTable& table,
                      const std::vector<std::string>& comment_lines) {
    std::string out;
    for (const auto& line : comment_lines) {
        out += "# " + line + "\n";
    }
    auto emit_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out += ',';
            out += csv_escape(row[i]);
        }
        out += '\n';
    };
    emit_row(table.header);
    for (const auto& row : table.rows) emit_row(row);
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& bytes, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    while (pos < bytes.size()) {
        const char c = bytes[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < bytes.size() && bytes[pos + 1] == '"') {
                    field += '"';
                    ++pos;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++pos;
            break;
        } else if (c != '\r') {
            field += c;
        }
        ++pos;
    }
    fields.push_back(std::move(field));
    return fields;
}

}  // namespace

CsvTable read_csv(const std::string& bytes) {
    CsvTable table;
    std::size_t pos = 0;
    bool have_header = false;
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {  // comment line
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            if (pos < bytes.size()) ++pos;
            continue;
        }
        if (bytes[pos] == '\n' || bytes[pos] == '\r') {  // blank line
            ++pos;
            continue;
        }
        auto fields = split_csv_line(bytes, pos);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
        } else {
            table.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw ParseError("CSV input has no header row");
    return table;
}

}  // namespace defectmet
