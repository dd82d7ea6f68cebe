#include "fitbd/csv.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fitbd/error.hpp"

namespace fitbd {

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      return cells;
    }
    cells.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.empty()) fail(ErrorCode::kParse, "line 1: empty header");
      table.header = split_csv_line(line);
      continue;
    }
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size()) {
      fail(ErrorCode::kParse, fmt::format("line {}: expected {} fields, found {}", line_no,
                                          table.header.size(), cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (line_no == 0) fail(ErrorCode::kParse, "empty csv");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  return read_csv(in);
}

std::string format_real(double value) { return fmt::format("{}", value); }

std::string rounds_csv_row(const RoundRecord& record) {
  std::string accepted = "-";
  if (record.accepted_clients) {
    accepted = fmt::format("{}", fmt::join(*record.accepted_clients, ";"));
  }
  return fmt::format("{},{},{},{},{},{}", record.round, format_real(record.ma),
                     format_real(record.asr), record.bsnr.to_string(), record.aggregator, accepted);
}

void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> records) {
  out << kRoundsHeader << '\n';
  for (const auto& record : records) out << rounds_csv_row(record) << '\n';
}

}  // namespace fitbd
