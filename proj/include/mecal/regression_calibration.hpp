#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mecal/core_model.hpp"
#include "mecal/stats_fitters.hpp"

namespace mecal {

enum class CalibrationForm { Simple, Efficient };

struct CalibrationModel {
  CalibrationForm form = CalibrationForm::Efficient;
  /// Simple form: coefficients of W2 on (1, W1, Z...).
  Eigen::VectorXd simple_coefficients;
  /// Efficient form: the random-intercepts measurement model.
  MixedModelFit mixed;

  /// lambda = s2x / (s2x + s2u / N); 1 when both variances are zero.
  double shrinkage(int n_measurements) const;
};

struct ConditionalX {
  double mean = 0.0;
  /// Unset for the simple form.
  std::optional<double> variance;
};

/// OLS of W2 on (1, W1, Z) over individuals with both measurements.
CalibrationModel fit_calibration_simple(const MEDataset& d);
CalibrationModel fit_calibration_efficient(const MEDataset& d, bool include_shift);

/// E(X | W, Z) and Var(X | W, Z) per individual. The simple form predicts from W1.
std::vector<ConditionalX> predict_conditional_x(const CalibrationModel& m, const MEDataset& d);

/// Outcome-model fit with `exposure` standing in for X; Wald intervals at `level`.
FitResult fit_outcome(const std::vector<double>& exposure, const MEDataset& d, const OutcomeSpec& spec,
                      Method tag, double level = 0.95);

/// Uses the first measurement as if it were X (complete cases on W1).
FitResult fit_naive(const MEDataset& d, const OutcomeSpec& spec, double level = 0.95);

/// Regression calibration point estimate. No intervals: the two-stage
/// uncertainty needs bootstrap_rc.
FitResult fit_rc(const MEDataset& d, const OutcomeSpec& spec, CalibrationForm form);

struct BootstrapOptions {
  int replicates = 2000;
  std::uint64_t seed = 1;
  double level = 0.95;
  unsigned threads = 1;
};

struct BootstrapFit {
  FitResult result;
  /// Successful replicate estimates per coefficient name, in replicate order.
  std::map<std::string, std::vector<double>> replicates;
  int failures = 0;
};

/// Nonparametric bootstrap over individuals with percentile intervals.
/// Replicate b draws from a stream seeded by (seed, b).
BootstrapFit bootstrap_rc(const MEDataset& d, const OutcomeSpec& spec, CalibrationForm form,
                          const BootstrapOptions& options);

}  // namespace mecal
