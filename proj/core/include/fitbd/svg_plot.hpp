#pragma once

#include <span>
#include <string>
#include <string_view>

#include "fitbd/csv.hpp"

namespace fitbd {

struct PlotOptions {
  std::string title;
  int width = 640;
  int height = 400;
};

// Line chart of y_columns against x_column. Non-numeric cells (sentinels such
// as "undefined") break a series into separate segments. Output bytes depend
// only on the inputs.
std::string render_svg(const CsvTable& table, std::string_view x_column,
                       std::span<const std::string> y_columns, const PlotOptions& options = {});

// Reads csv_path and writes out_path; nothing is written if any check fails.
void render_svg_file(const std::string& csv_path, std::string_view x_column,
                     std::span<const std::string> y_columns, const std::string& out_path,
                     const PlotOptions& options = {});

}  // namespace fitbd
