#include "fitbd/svg_plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <vector>

#include <fmt/format.h>

#include "fitbd/error.hpp"

namespace fitbd {
namespace {

constexpr std::string_view kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                         "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
constexpr double kMarginLeft = 60, kMarginRight = 130, kMarginTop = 36, kMarginBottom = 44;

std::optional<double> parse_cell(const std::string& cell) {
  double value = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0, hi = 1;
};

Range padded(double lo, double hi) {
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

}  // namespace

std::string render_svg(const CsvTable& table, std::string_view x_column,
                       std::span<const std::string> y_columns, const PlotOptions& options) {
  if (table.rows.empty()) fail(ErrorCode::kEmptyInput, "csv has no data rows");
  if (y_columns.empty()) fail(ErrorCode::kInvalidArgument, "no y columns requested");
  const auto x_idx = table.column(x_column);
  if (!x_idx) fail(ErrorCode::kInvalidArgument, fmt::format("missing column '{}'", x_column));
  std::vector<std::size_t> y_idx;
  for (const auto& name : y_columns) {
    const auto idx = table.column(name);
    if (!idx) fail(ErrorCode::kInvalidArgument, fmt::format("missing column '{}'", name));
    y_idx.push_back(*idx);
  }

  // points[s][row]; nullopt where either coordinate is not numeric
  using Point = std::optional<std::pair<double, double>>;
  std::vector<std::vector<Point>> points(y_idx.size());
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (std::size_t s = 0; s < y_idx.size(); ++s) {
    for (const auto& row : table.rows) {
      const auto x = parse_cell(row[*x_idx]);
      const auto y = parse_cell(row[y_idx[s]]);
      if (!x || !y) {
        points[s].push_back(std::nullopt);
        continue;
      }
      points[s].push_back(std::pair{*x, *y});
      x_lo = std::min(x_lo, *x);
      x_hi = std::max(x_hi, *x);
      y_lo = std::min(y_lo, *y);
      y_hi = std::max(y_hi, *y);
    }
  }
  if (x_lo > x_hi) fail(ErrorCode::kEmptyInput, "no numeric points to plot");
  const Range xr = padded(x_lo, x_hi);
  const Range yr = padded(y_lo, y_hi);

  const double w = options.width, h = options.height;
  const double plot_w = w - kMarginLeft - kMarginRight;
  const double plot_h = h - kMarginTop - kMarginBottom;
  auto sx = [&](double x) { return kMarginLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto sy = [&](double y) { return kMarginTop + plot_h - (y - yr.lo) / (yr.hi - yr.lo) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
      options.width, options.height, options.width, options.height);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", options.width,
                     options.height);
  if (!options.title.empty()) {
    svg += fmt::format("<text x=\"{:.2f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       kMarginLeft + plot_w / 2, escape(options.title));
  }

  // axes and ticks
  svg += fmt::format("<g stroke=\"black\" stroke-width=\"1\">\n"
                     "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\"/>\n"
                     "<line x1=\"{0:.2f}\" y1=\"{3:.2f}\" x2=\"{0:.2f}\" y2=\"{1:.2f}\"/>\n</g>\n",
                     kMarginLeft, kMarginTop + plot_h, kMarginLeft + plot_w, kMarginTop);
  constexpr int kTicks = 5;
  svg += "<g font-size=\"10\" fill=\"black\">\n";
  for (int i = 0; i < kTicks; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / (kTicks - 1);
    const double fy = yr.lo + (yr.hi - yr.lo) * i / (kTicks - 1);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.3g}</text>\n", sx(fx),
                       kMarginTop + plot_h + 14, fx);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n",
                       kMarginLeft - 6, sy(fy) + 3, fy);
  }
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n</g>\n",
                     kMarginLeft + plot_w / 2, h - 8, escape(x_column));

  for (std::size_t s = 0; s < points.size(); ++s) {
    const auto color = kPalette[s % std::size(kPalette)];
    std::vector<std::pair<double, double>> run;
    auto flush = [&] {
      if (run.size() == 1) {
        svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"{}\"/>\n",
                           sx(run[0].first), sy(run[0].second), color);
      } else if (run.size() > 1) {
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", color);
        for (std::size_t i = 0; i < run.size(); ++i) {
          svg += fmt::format("{}{:.2f},{:.2f}", i ? " " : "", sx(run[i].first), sy(run[i].second));
        }
        svg += "\"/>\n";
      }
      run.clear();
    };
    for (const auto& p : points[s]) {
      if (p) {
        run.push_back(*p);
      } else {
        flush();
      }
    }
    flush();
    const double ly = kMarginTop + 12 + 16 * static_cast<double>(s);
    const double lx = kMarginLeft + plot_w + 10;
    svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       lx, ly - 4, lx + 18, ly - 4, color);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"11\">{}</text>\n", lx + 22, ly,
                       escape(y_columns[s]));
  }
  svg += "</svg>\n";
  return svg;
}

void render_svg_file(const std::string& csv_path, std::string_view x_column,
                     std::span<const std::string> y_columns, const std::string& out_path,
                     const PlotOptions& options) {
  const std::string svg = render_svg(read_csv_file(csv_path), x_column, y_columns, options);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + out_path);
  out << svg;
  if (!out) fail(ErrorCode::kIo, "failed writing " + out_path);
}

}  // namespace fitbd
