#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mecal {

enum class OutcomeKind { Linear, Logistic, Cox, Weibull };

std::string to_string(OutcomeKind kind);
OutcomeKind parse_outcome_kind(const std::string& s);

struct OutcomeSpec {
  OutcomeKind kind = OutcomeKind::Linear;
  // The second measurement carries a systematic mean shift nu relative to the first.
  bool exam_shift = false;

  bool has_intercept() const { return kind != OutcomeKind::Cox; }
  bool is_survival() const { return kind == OutcomeKind::Cox || kind == OutcomeKind::Weibull; }
};

struct ContinuousOutcome {
  std::vector<double> y;
  bool operator==(const ContinuousOutcome&) const = default;
};

struct BinaryOutcome {
  std::vector<int> y;
  bool operator==(const BinaryOutcome&) const = default;
};

struct SurvivalOutcome {
  std::vector<double> time;
  std::vector<int> event;
  bool operator==(const SurvivalOutcome&) const = default;
};

using Outcome = std::variant<ContinuousOutcome, BinaryOutcome, SurvivalOutcome>;

/// Up to two error-prone measurements; an empty optional is a missing slot.
struct Measurements {
  std::optional<double> w1;
  std::optional<double> w2;

  int count() const { return (w1 ? 1 : 0) + (w2 ? 1 : 0); }
  /// Mean of the available measurements after removing `shift` from w2.
  double mean(double shift = 0.0) const;
  bool operator==(const Measurements&) const = default;
};

/// One error-free covariate column. Entries with present[i] == 0 are missing;
/// their stored value is 0 and carries no meaning.
struct Covariate {
  std::string name;
  std::vector<double> values;
  std::vector<char> present;
  bool binary_with_missing = false;

  bool observed(std::size_t i) const { return present[i] != 0; }
  bool fully_observed() const;
  bool operator==(const Covariate&) const = default;
};

struct MEDataset {
  Outcome outcome;
  std::vector<Measurements> w;
  std::vector<Covariate> z;

  std::size_t n() const { return w.size(); }
  std::size_t p() const { return z.size(); }
  bool operator==(const MEDataset&) const = default;

  const std::vector<double>& y() const { return std::get<ContinuousOutcome>(outcome).y; }
  const std::vector<int>& binary_y() const { return std::get<BinaryOutcome>(outcome).y; }
  const SurvivalOutcome& survival() const { return std::get<SurvivalOutcome>(outcome); }

  /// Copy restricted to the given rows (duplicates allowed, order kept).
  MEDataset subset(const std::vector<std::size_t>& rows) const;
};

struct Violation {
  std::optional<std::size_t> row;
  std::string message;
};

/// Never throws; an empty result means the dataset is well formed for `spec`.
std::vector<Violation> validate_dataset(const MEDataset& d, const OutcomeSpec& spec);

/// Rows with every covariate observed and at least `min_measurements` measurements.
std::vector<std::size_t> complete_case_rows(const MEDataset& d, int min_measurements);

/// Outcome-specific extras.
struct ResidualVariance {
  double sigma2 = 0.0;
};
struct HazardIncrements {
  std::vector<double> event_times;
  std::vector<double> increments;
};
struct WeibullShape {
  double shape = 1.0;
};
using OutcomeExtras = std::variant<std::monostate, ResidualVariance, HazardIncrements, WeibullShape>;

struct MeasurementParams {
  double gamma0 = 0.0;
  std::vector<double> gammaZ;
  double sigma2_XgZ = 1.0;
  double sigma2_U = 1.0;
  std::optional<double> nu;
};

struct ParamVector {
  std::optional<double> beta0;
  double betaX = 0.0;
  std::vector<double> betaZ;
  OutcomeExtras eta;
  std::optional<MeasurementParams> measurement;
};

enum class Method { Naive, RcSimple, RcEfficient, Bayes };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct FitResult {
  Method method = Method::Naive;
  ParamVector estimates;
  double level = 0.95;
  std::map<std::string, Interval> intervals;
  std::map<std::string, double> diagnostics;
  bool converged = true;
};

/// Flattened (name, value) view of the outcome-model coefficients:
/// beta0 (if present), betaX, beta_<covariate>...
std::vector<std::pair<std::string, double>> coefficient_entries(
    const ParamVector& p, const std::vector<std::string>& covariate_names);

}  // namespace mecal
