#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace defectmet {

/// Minimal CSV support for the report files: comma separation, RFC-style
/// double-quote escaping, '#' comment lines skipped on read. Numbers are
/// written shortest-round-trip so emitted files reparse to the exact
/// same doubles.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string format_double(double value);
double parse_double(const std::string& text, const std::string& context);

std::string csv_escape(const std::string& field);
std::string write_csv(const CsvTable& table,
                      const std::vector<std::string>& comment_lines = {});
CsvTable read_csv(const std::string& bytes);

}  // namespace defectmet
