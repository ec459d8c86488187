#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace drugcomb::csv {

// Minimal CSV: comma separated, optional surrounding double quotes, no
// embedded commas inside quotes.
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Next non-blank line, split into fields; false at end of stream.
inline bool next_row(std::istream& in, std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    fields = split(line);
    return true;
  }
  return false;
}

}  // namespace drugcomb::csv
