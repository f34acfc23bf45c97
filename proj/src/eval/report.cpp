#include "cdasr/eval/report.hpp"

#include <cstdio>
#include <sstream>

namespace cdasr::eval {

Cell Cell::from_score(const EvalScore& score) {
  Cell c;
  c.wer = round1(score.average);
  c.subsets = score.subsets;
  return c;
}

Cell Cell::failed(std::string error) {
  Cell c;
  c.error = error.empty() ? "failed" : std::move(error);
  return c;
}

ResultTable::ResultTable(std::string name_, std::vector<std::string> columns_, std::vector<std::string> rows_)
    : name(std::move(name_)), columns(std::move(columns_)), rows(std::move(rows_)) {
  cells.assign(rows.size(), std::vector<Cell>(columns.size(), Cell::failed("not run")));
}

std::optional<size_t> ResultTable::row_index(const std::string& label) const {
  for (size_t r = 0; r < rows.size(); ++r)
    if (rows[r] == label) return r;
  return std::nullopt;
}

std::optional<double> ResultTable::average(size_t row) const {
  std::vector<double> values;
  for (const auto& c : cells.at(row)) {
    if (!c.ok()) return std::nullopt;
    values.push_back(*c.wer);
  }
  if (values.empty()) return std::nullopt;
  return average_across(values);
}

std::string format_wer(double wer) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", round1(wer));
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, any = false;
  for (size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n') {
      record.push_back(std::move(field));
      records.push_back(std::move(record));
      field.clear();
      record.clear();
      any = false;
    } else if (ch != '\r') {
      field += ch;
      any = true;
    }
  }
  if (quoted) throw Error("CSV: unterminated quoted field");
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string markdown_cell(const std::string& s) {
  std::string out;
  for (char ch : s) out += ch == '|' ? std::string("\\|") : std::string(1, ch);
  return out;
}

}  // namespace

std::string to_csv(const ResultTable& table) {
  std::string out = "condition";
  for (const auto& c : table.columns) out += "," + csv_field(c);
  out += "," + kAvgColumn + "\n";
  for (size_t r = 0; r < table.rows.size(); ++r) {
    out += csv_field(table.rows[r]);
    for (const auto& c : table.cells[r]) out += "," + (c.ok() ? format_wer(*c.wer) : std::string());
    auto avg = table.average(r);
    out += "," + (avg ? format_wer(*avg) : std::string()) + "\n";
  }
  return out;
}

ResultTable parse_csv(const std::string& text, const std::string& name) {
  auto records = parse_csv_records(text);
  if (records.empty()) throw Error("CSV: missing header");
  const auto& header = records[0];
  if (header.size() < 2 || header.front() != "condition" || header.back() != kAvgColumn)
    throw Error("CSV: header must start with 'condition' and end with '" + kAvgColumn + "'");
  std::vector<std::string> columns(header.begin() + 1, header.end() - 1);
  std::vector<std::string> rows;
  for (size_t k = 1; k < records.size(); ++k) rows.push_back(records[k].at(0));
  ResultTable t(name, columns, rows);
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto& rec = records[r + 1];
    if (rec.size() != header.size()) throw Error("CSV: row " + std::to_string(r + 1) + " has the wrong field count");
    for (size_t c = 0; c < columns.size(); ++c) {
      const auto& f = rec[c + 1];
      if (f.empty()) {
        t.at(r, c) = Cell::failed("failed");
        continue;
      }
      size_t used = 0;
      double v = std::stod(f, &used);
      if (used != f.size()) throw Error("CSV: malformed value '" + f + "'");
      t.at(r, c).wer = v;
      t.at(r, c).error.clear();
    }
    auto avg = t.average(r);
    const auto& stored = rec.back();
    if ((avg ? format_wer(*avg) : std::string()) != stored)
      throw Error("CSV: stored " + kAvgColumn + " of '" + rows[r] + "' does not match its cells");
  }
  return t;
}

std::string to_markdown(const ResultTable& table) {
  static const std::string dash = "—";
  std::string out = "| Condition |";
  std::string sep = "|---|";
  for (const auto& c : table.columns) {
    out += " " + markdown_cell(c) + " |";
    sep += "---:|";
  }
  out += " " + kAvgColumn + " |\n" + sep + "---:|\n";
  for (size_t r = 0; r < table.rows.size(); ++r) {
    out += "| " + markdown_cell(table.rows[r]) + " |";
    for (const auto& c : table.cells[r]) out += " " + (c.ok() ? format_wer(*c.wer) : dash) + " |";
    auto avg = table.average(r);
    out += " " + (avg ? format_wer(*avg) : dash) + " |\n";
  }
  return out;
}

std::string to_svg(const ResultTable& table) {
  const int label_w = 230, bar_w = 360, row_h = 22, top = 30;
  const int width = label_w + bar_w + 60;
  const int height = top + row_h * static_cast<int>(table.rows.size()) + 30;
  double max_wer = 0;
  for (size_t r = 0; r < table.rows.size(); ++r)
    if (auto a = table.average(r)) max_wer = std::max(max_wer, *a);
  const double scale = max_wer > 0 ? bar_w / max_wer : 0.0;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<text x=\"10\" y=\"18\" font-weight=\"bold\">" << escape_xml(table.name) << " (" << kAvgColumn
    << " WER %)</text>\n";
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const int y = top + row_h * static_cast<int>(r);
    s << "<text x=\"" << label_w - 6 << "\" y=\"" << y + 15 << "\" text-anchor=\"end\">" << escape_xml(table.rows[r])
      << "</text>\n";
    auto avg = table.average(r);
    if (!avg) {
      s << "<text x=\"" << label_w + 4 << "\" y=\"" << y + 15 << "\">—</text>\n";
      continue;
    }
    char len[32];
    std::snprintf(len, sizeof len, "%.1f", *avg * scale);
    s << "<rect x=\"" << label_w << "\" y=\"" << y + 3 << "\" width=\"" << len << "\" height=\"" << row_h - 6
      << "\" fill=\"" << (table.rows[r].find("SST") != std::string::npos ? "#c0504d" : "#4f81bd") << "\"/>\n";
    std::snprintf(len, sizeof len, "%.1f", *avg * scale + label_w + 4);
    s << "<text x=\"" << len << "\" y=\"" << y + 15 << "\">" << format_wer(*avg) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<fs::path> emit_report(const ResultTable& table, const fs::path& dir,
                                  const std::vector<ReportFormat>& formats) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("emit_report: cannot create " + dir.string());
  std::vector<fs::path> out;
  for (auto f : formats) {
    fs::path p;
    std::string body;
    switch (f) {
      case ReportFormat::CSV: p = dir / (table.name + ".csv"); body = to_csv(table); break;
      case ReportFormat::Markdown: p = dir / (table.name + ".md"); body = to_markdown(table); break;
      case ReportFormat::SVG: p = dir / (table.name + ".svg"); body = to_svg(table); break;
    }
    write_file_atomic(p, body);
    out.push_back(p);
  }
  return out;
}

}  // namespace cdasr::eval
