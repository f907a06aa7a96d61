#include "adr/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "adr/errors.hpp"

namespace adr {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw IoError("csv: cannot parse '" + s + "' as a number");
  }
  return v;
}

long parse_long(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw IoError("csv: cannot parse '" + s + "' as an integer");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               bool skip_comments) {
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (skip_comments && line[0] == '#') continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace adr
