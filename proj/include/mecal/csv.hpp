#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "mecal/core_model.hpp"
#include "mecal/errors.hpp"

namespace mecal {

/// Raw comma-separated table: a header row plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Row-level parse failures, reported together.
class DatasetParseError : public InputError {
 public:
  explicit DatasetParseError(std::vector<std::string> messages);
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
};

struct DatasetCsvOptions {
  OutcomeKind kind = OutcomeKind::Linear;
  /// Covariate columns that are binary and may contain blanks.
  std::set<std::string> binary_with_missing;
};

/// Columns: y (linear/logistic) or time,event (cox/weibull); w1; optional w2;
/// every other column is an error-free covariate in file order. Blank = missing.
MEDataset parse_dataset(const CsvTable& table, const DatasetCsvOptions& options);
MEDataset read_dataset_file(const std::string& path, const DatasetCsvOptions& options);

/// Writes shortest round-trip decimal representations, so parse(write(d)) == d.
void write_dataset(std::ostream& out, const MEDataset& d);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_exact(double v);

}  // namespace mecal
