#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ctp {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws if absent
};

/// Numeric CSV with a header row. Throws "no data rows" when empty.
CsvTable read_numeric_csv(const std::filesystem::path& path);

/// Grid heat map: x and y are coordinate columns, colour encodes `value`.
std::string render_heatmap(const CsvTable& t, const std::string& x, const std::string& y,
                           const std::string& value, const std::string& title);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // empty or parallel to y
};

/// Line chart with one polyline per series, error bars and a legend.
std::string render_line_chart(const std::vector<Series>& series, const std::string& x_label,
                              const std::string& y_label, const std::string& title);

}  // namespace ctp
