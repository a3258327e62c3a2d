#pragma once

#include <string>
#include <vector>

namespace nmqi {

/// Numeric table with '#' metadata lines ahead of the header row.
struct CsvTable {
  std::vector<std::string> metadata;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

/// 12 significant digits.
std::string format_number(double v);

std::string to_csv(const CsvTable& t);
void write_csv(const std::string& path, const CsvTable& t);
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

}  // namespace nmqi
