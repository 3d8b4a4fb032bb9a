#include "mecal/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mecal {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      // Skip a UTF-8 byte order mark.
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (trim(line).empty()) continue;
      for (auto& h : split_line(line)) t.header.push_back(trim(h));
      have_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    for (auto& c : cells) c = trim(c);
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw InputError("CSV input has no header row");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in);
}

DatasetParseError::DatasetParseError(std::vector<std::string> messages)
    : InputError([&] {
        std::string s = "dataset parse failed";
        for (const auto& m : messages) s += "\n  " + m;
        return s;
      }()),
      messages_(std::move(messages)) {}

MEDataset parse_dataset(const CsvTable& table, const DatasetCsvOptions& options) {
  std::vector<std::string> errors;
  const bool survival = options.kind == OutcomeKind::Cox || options.kind == OutcomeKind::Weibull;

  auto require = [&](const std::string& name) {
    const int j = table.column(name);
    if (j < 0) errors.push_back("missing required column '" + name + "'");
    return j;
  };
  const int col_y = survival ? -1 : require("y");
  const int col_time = survival ? require("time") : -1;
  const int col_event = survival ? require("event") : -1;
  const int col_w1 = require("w1");
  const int col_w2 = table.column("w2");
  if (!errors.empty()) throw DatasetParseError(errors);

  std::vector<int> z_cols;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    const int jj = static_cast<int>(j);
    if (jj == col_y || jj == col_time || jj == col_event || jj == col_w1 || jj == col_w2) continue;
    z_cols.push_back(jj);
  }
  for (const auto& name : options.binary_with_missing)
    if (table.column(name) < 0) errors.push_back("binary covariate '" + name + "' is not a column");

  MEDataset d;
  const std::size_t n = table.rows.size();
  d.w.resize(n);
  for (int j : z_cols) {
    Covariate c;
    c.name = table.header[j];
    c.binary_with_missing = options.binary_with_missing.count(c.name) > 0;
    c.values.assign(n, 0.0);
    c.present.assign(n, 1);
    d.z.push_back(std::move(c));
  }
  ContinuousOutcome cont;
  BinaryOutcome bin;
  SurvivalOutcome surv;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    // Data rows are numbered from 1 after the header.
    const std::string where = "row " + std::to_string(i + 1);
    if (row.size() != table.header.size()) {
      errors.push_back(where + ": expected " + std::to_string(table.header.size()) + " fields, got " +
                       std::to_string(row.size()));
      continue;
    }
    auto number = [&](int j, bool allow_blank) -> std::optional<double> {
      const auto& cell = row[j];
      if (cell.empty()) {
        if (!allow_blank) errors.push_back(where + ": column '" + table.header[j] + "' is blank");
        return std::nullopt;
      }
      auto v = parse_number(cell);
      if (!v) errors.push_back(where + ": column '" + table.header[j] + "' is not a number: '" + cell + "'");
      return v;
    };
    if (survival) {
      surv.time.push_back(number(col_time, false).value_or(0.0));
      surv.event.push_back(static_cast<int>(number(col_event, false).value_or(0.0)));
    } else if (options.kind == OutcomeKind::Logistic) {
      bin.y.push_back(static_cast<int>(number(col_y, false).value_or(0.0)));
    } else {
      cont.y.push_back(number(col_y, false).value_or(0.0));
    }
    d.w[i].w1 = number(col_w1, true);
    if (col_w2 >= 0) d.w[i].w2 = number(col_w2, true);
    for (std::size_t k = 0; k < z_cols.size(); ++k) {
      auto& c = d.z[k];
      auto v = number(z_cols[k], c.binary_with_missing);
      if (v) {
        c.values[i] = *v;
      } else {
        c.present[i] = 0;
      }
    }
  }
  if (!errors.empty()) throw DatasetParseError(errors);
  if (survival)
    d.outcome = std::move(surv);
  else if (options.kind == OutcomeKind::Logistic)
    d.outcome = std::move(bin);
  else
    d.outcome = std::move(cont);
  return d;
}

MEDataset read_dataset_file(const std::string& path, const DatasetCsvOptions& options) {
  return parse_dataset(read_csv_file(path), options);
}

std::string format_exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_dataset(std::ostream& out, const MEDataset& d) {
  const bool survival = std::holds_alternative<SurvivalOutcome>(d.outcome);
  out << (survival ? "time,event" : "y") << ",w1,w2";
  for (const auto& c : d.z) out << ',' << c.name;
  out << '\n';
  for (std::size_t i = 0; i < d.n(); ++i) {
    if (const auto* c = std::get_if<ContinuousOutcome>(&d.outcome))
      out << format_exact(c->y[i]);
    else if (const auto* b = std::get_if<BinaryOutcome>(&d.outcome))
      out << b->y[i];
    else
      out << format_exact(d.survival().time[i]) << ',' << d.survival().event[i];
    out << ',';
    if (d.w[i].w1) out << format_exact(*d.w[i].w1);
    out << ',';
    if (d.w[i].w2) out << format_exact(*d.w[i].w2);
    for (const auto& c : d.z) {
      out << ',';
      if (c.observed(i)) out << format_exact(c.values[i]);
    }
    out << '\n';
  }
}

}  // namespace mecal
