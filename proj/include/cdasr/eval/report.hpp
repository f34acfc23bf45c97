#pragma once

#include "cdasr/eval/wer.hpp"
#include "cdasr/io.hpp"

#include <optional>

namespace cdasr::eval {

inline const std::string kAvgColumn = "Avg.";

/// One condition cell: mean of the eval subset WERs rounded to one decimal, or a failure.
struct Cell {
  std::optional<double> wer;
  std::map<corpus::EvalSubset, WERBreakdown> subsets;
  std::string error;

  bool ok() const { return wer.has_value(); }
  static Cell from_score(const EvalScore& score);
  static Cell failed(std::string error);
};

struct ResultTable {
  std::string name;
  std::vector<std::string> columns;  // corpus conditions; "Avg." is derived
  std::vector<std::string> rows;
  std::vector<std::vector<Cell>> cells;

  ResultTable() = default;
  ResultTable(std::string name, std::vector<std::string> columns, std::vector<std::string> rows);

  Cell& at(size_t row, size_t column) { return cells.at(row).at(column); }
  const Cell& at(size_t row, size_t column) const { return cells.at(row).at(column); }
  std::optional<size_t> row_index(const std::string& label) const;

  /// average_across of the row's cells; empty when any cell failed.
  std::optional<double> average(size_t row) const;
};

std::string to_csv(const ResultTable& table);
ResultTable parse_csv(const std::string& text, const std::string& name);
/// Failed cells are rendered as "—".
std::string to_markdown(const ResultTable& table);
/// Horizontal bar chart of the Avg. column.
std::string to_svg(const ResultTable& table);

enum class ReportFormat { CSV, Markdown, SVG };
inline constexpr std::array<ReportFormat, 3> kAllFormats{ReportFormat::CSV, ReportFormat::Markdown, ReportFormat::SVG};

/// Writes <dir>/<table name>.{csv,md,svg}; returns the written paths.
std::vector<fs::path> emit_report(const ResultTable& table, const fs::path& dir,
                                  const std::vector<ReportFormat>& formats = {kAllFormats.begin(), kAllFormats.end()});

/// Fixed one-decimal rendering used in every report format.
std::string format_wer(double wer);

}  // namespace cdasr::eval
