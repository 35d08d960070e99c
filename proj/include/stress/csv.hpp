#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace stress::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerated.
// Blank lines are skipped. line_numbers (if given) receives the 1-based
// physical line each row started on.
std::vector<Row> parse(std::string_view text, std::vector<std::size_t>* line_numbers = nullptr);
std::vector<Row> read_file(const std::string& path, std::vector<std::size_t>* line_numbers = nullptr);

std::string escape(std::string_view field);
void write_row(std::ostream& os, const Row& row);

}  // namespace stress::csv
