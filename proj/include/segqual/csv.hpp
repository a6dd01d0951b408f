#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace segqual::csv {

/// Shortest decimal that round-trips to the same double.
std::string format(double value);
std::string format(long long value);

std::vector<std::string> split_line(std::string_view line);

/// Reads the next non-empty line into fields; false at end of input.
bool read_row(std::istream& in, std::vector<std::string>& fields);

double parse_double(const std::string& field);
long long parse_int(const std::string& field);

}  // namespace segqual::csv
