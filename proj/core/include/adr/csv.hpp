#ifndef ADR_CSV_HPP
#define ADR_CSV_HPP

#include <string>
#include <vector>

namespace adr {

/// Shortest representation that parses back to the identical double
/// (printf %.17g round-trips every finite value).
std::string format_double(double v);

double parse_double(const std::string& s);
long parse_long(const std::string& s);

std::vector<std::string> split_csv_line(const std::string& line);

/// Reads a CSV file into lines, skipping '#' comment lines when requested.
std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               bool skip_comments = true);

}  // namespace adr

#endif  // ADR_CSV_HPP
