#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mixbf::csv {

// Numeric table with a mandatory header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws IoError if absent
  std::vector<double> values(const std::string& name) const;
};

Table read(std::istream& is, const std::string& origin = "<stream>");
Table read(const std::filesystem::path& path);

// Writes to a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace mixbf::csv
