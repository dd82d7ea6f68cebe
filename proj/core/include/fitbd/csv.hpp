#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fitbd/fl_engine.hpp"

namespace fitbd {

// Plain comma-separated text: no quoting, every row as wide as the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
};

// Throws kParse citing the line number on a ragged row or an empty header.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

std::vector<std::string> split_csv_line(std::string_view line);

// Shortest text that reads back to the same double.
std::string format_real(double value);

inline constexpr std::string_view kRoundsHeader = "round,ma,asr,bsnr,agg,accepted_indices";

// accepted_indices is ';'-joined client ids, or "-" for aggregators that keep everyone.
std::string rounds_csv_row(const RoundRecord& record);
void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> records);

}  // namespace fitbd
