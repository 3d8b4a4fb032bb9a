#include "mecal/regression_calibration.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "mecal/parallel.hpp"
#include "mecal/percentile.hpp"
#include "mecal/random.hpp"

namespace mecal {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_observed_covariates(const MEDataset& d, const char* what) {
  for (const auto& c : d.z)
    if (!c.fully_observed())
      throw InputError(std::string(what) + ": covariate '" + c.name +
                       "' has missing values; use complete cases");
}

double wald_multiplier(double level) {
  return boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - level) / 2.0);
}

}  // namespace

double CalibrationModel::shrinkage(int n_measurements) const {
  const double s2x = mixed.sigma2_XgZ, s2u = mixed.sigma2_U;
  if (s2u == 0.0) return 1.0;
  return s2x / (s2x + s2u / n_measurements);
}

CalibrationModel fit_calibration_simple(const MEDataset& d) {
  require_observed_covariates(d, "simple calibration");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.n(); ++i)
    if (d.w[i].w1 && d.w[i].w2) rows.push_back(i);
  const auto k = static_cast<Eigen::Index>(2 + d.p());
  if (rows.size() < 3 || static_cast<Eigen::Index>(rows.size()) < k)
    throw InsufficientDataError("simple calibration needs at least 3 individuals with both measurements, got " +
                                std::to_string(rows.size()));
  DesignMatrix x{MatrixXd(static_cast<Eigen::Index>(rows.size()), k), {"intercept", "w1"}};
  for (const auto& c : d.z) x.names.push_back(c.name);
  VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    const auto row = static_cast<Eigen::Index>(r);
    x.x(row, 0) = 1.0;
    x.x(row, 1) = *d.w[i].w1;
    for (std::size_t j = 0; j < d.p(); ++j) x.x(row, static_cast<Eigen::Index>(j) + 2) = d.z[j].values[i];
    y(row) = *d.w[i].w2;
  }
  CalibrationModel m;
  m.form = CalibrationForm::Simple;
  m.simple_coefficients = fit_ols(x, y).coefficients;
  return m;
}

CalibrationModel fit_calibration_efficient(const MEDataset& d, bool include_shift) {
  CalibrationModel m;
  m.form = CalibrationForm::Efficient;
  m.mixed = fit_mixed_model_ml(d, include_shift);
  return m;
}

std::vector<ConditionalX> predict_conditional_x(const CalibrationModel& m, const MEDataset& d) {
  std::vector<ConditionalX> out(d.n());
  if (m.form == CalibrationForm::Simple) {
    for (std::size_t i = 0; i < d.n(); ++i) {
      if (!d.w[i].w1) throw InputError("simple calibration needs w1 at row " + std::to_string(i));
      double mean = m.simple_coefficients(0) + m.simple_coefficients(1) * *d.w[i].w1;
      for (std::size_t j = 0; j < d.p(); ++j)
        mean += m.simple_coefficients(static_cast<Eigen::Index>(j) + 2) * d.z[j].values[i];
      out[i].mean = mean;
    }
    return out;
  }
  const auto& mm = m.mixed;
  if (mm.gammaZ.size() != d.p()) throw InputError("calibration model and dataset disagree on covariates");
  const double shift = mm.nu.value_or(0.0);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const int count = d.w[i].count();
    if (count == 0) throw InputError("efficient calibration needs a measurement at row " + std::to_string(i));
    double prior_mean = mm.gamma0;
    for (std::size_t j = 0; j < d.p(); ++j) prior_mean += mm.gammaZ[j] * d.z[j].values[i];
    const double lambda = m.shrinkage(count);
    out[i].mean = prior_mean + lambda * (d.w[i].mean(shift) - prior_mean);
    out[i].variance = mm.sigma2_XgZ * (1.0 - lambda);
  }
  return out;
}

FitResult fit_outcome(const std::vector<double>& exposure, const MEDataset& d, const OutcomeSpec& spec,
                      Method tag, double level) {
  require_observed_covariates(d, "outcome model");
  const DesignMatrix x = outcome_design(exposure, d, spec.has_intercept());
  VectorXd coef;
  MatrixXd cov;
  FitResult result;
  result.method = tag;
  result.level = level;
  switch (spec.kind) {
    case OutcomeKind::Linear: {
      const auto& yv = d.y();
      const auto fit = fit_ols(x, Eigen::Map<const VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size())));
      coef = fit.coefficients;
      cov = fit.covariance;
      result.estimates.eta = ResidualVariance{fit.residual_variance};
      break;
    }
    case OutcomeKind::Logistic: {
      const auto fit = fit_logistic_irls(x, d.binary_y());
      coef = fit.coefficients;
      cov = fit.covariance;
      break;
    }
    case OutcomeKind::Cox: {
      const auto& s = d.survival();
      const auto fit = fit_cox_partial(s.time, s.event, x);
      coef = fit.coefficients;
      cov = fit.covariance;
      result.estimates.eta = breslow_increments(s.time, s.event, x.x * coef);
      break;
    }
    case OutcomeKind::Weibull: {
      const auto& s = d.survival();
      const auto fit = fit_weibull_ml(s.time, s.event, x);
      coef = fit.coefficients;
      cov = fit.covariance.topLeftCorner(coef.size(), coef.size());
      result.estimates.eta = WeibullShape{fit.shape};
      break;
    }
  }
  Eigen::Index j = 0;
  if (spec.has_intercept()) result.estimates.beta0 = coef(j++);
  result.estimates.betaX = coef(j++);
  for (; j < coef.size(); ++j) result.estimates.betaZ.push_back(coef(j));

  const double zq = wald_multiplier(level);
  for (Eigen::Index k = 0; k < coef.size(); ++k) {
    const double se = std::sqrt(cov(k, k));
    if (std::isfinite(se)) result.intervals[x.names[k]] = {coef(k) - zq * se, coef(k) + zq * se};
  }
  result.diagnostics["n_used"] = static_cast<double>(d.n());
  return result;
}

FitResult fit_naive(const MEDataset& d, const OutcomeSpec& spec, double level) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.n(); ++i)
    if (d.w[i].w1) rows.push_back(i);
  const MEDataset sub = rows.size() == d.n() ? d : d.subset(rows);
  std::vector<double> exposure;
  exposure.reserve(sub.n());
  for (const auto& m : sub.w) exposure.push_back(*m.w1);
  return fit_outcome(exposure, sub, spec, Method::Naive, level);
}

FitResult fit_rc(const MEDataset& d, const OutcomeSpec& spec, CalibrationForm form) {
  const CalibrationModel cal =
      form == CalibrationForm::Simple ? fit_calibration_simple(d) : fit_calibration_efficient(d, spec.exam_shift);
  const auto pred = predict_conditional_x(cal, d);
  std::vector<double> exposure;
  exposure.reserve(pred.size());
  for (const auto& p : pred) exposure.push_back(p.mean);
  FitResult r = fit_outcome(exposure, d, spec, form == CalibrationForm::Simple ? Method::RcSimple : Method::RcEfficient);
  // Wald intervals ignore the calibration step.
  r.intervals.clear();
  if (form == CalibrationForm::Efficient) {
    const auto& mm = cal.mixed;
    r.estimates.measurement = MeasurementParams{mm.gamma0, mm.gammaZ, mm.sigma2_XgZ, mm.sigma2_U, mm.nu};
    r.diagnostics["sigma2_U_at_boundary"] = mm.sigma2_U_at_boundary ? 1.0 : 0.0;
    r.diagnostics["sigma2_XgZ_at_boundary"] = mm.sigma2_XgZ_at_boundary ? 1.0 : 0.0;
  }
  return r;
}

BootstrapFit bootstrap_rc(const MEDataset& d, const OutcomeSpec& spec, CalibrationForm form,
                          const BootstrapOptions& options) {
  if (options.replicates < 100) throw InputError("bootstrap needs at least 100 replicates");
  BootstrapFit out;
  out.result = fit_rc(d, spec, form);
  std::vector<std::string> covariate_names;
  for (const auto& c : d.z) covariate_names.push_back(c.name);
  std::vector<std::string> names;
  for (const auto& entry : coefficient_entries(out.result.estimates, covariate_names)) names.push_back(entry.first);

  const auto b_count = static_cast<std::size_t>(options.replicates);
  std::vector<std::optional<std::vector<double>>> draws(b_count);
  parallel_for(b_count, options.threads, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    std::vector<std::size_t> rows(d.n());
    for (auto& r : rows) r = rng.index(d.n());
    try {
      const FitResult fit = fit_rc(d.subset(rows), spec, form);
      std::vector<double> v;
      for (const auto& entry : coefficient_entries(fit.estimates, covariate_names)) v.push_back(entry.second);
      draws[b] = std::move(v);
    } catch (const FitError&) {
    }
  });

  for (const auto& dr : draws) {
    if (!dr) {
      ++out.failures;
      continue;
    }
    for (std::size_t k = 0; k < names.size(); ++k) out.replicates[names[k]].push_back((*dr)[k]);
  }
  const double failure_rate = static_cast<double>(out.failures) / static_cast<double>(b_count);
  if (failure_rate > 0.10)
    throw FitError("bootstrap: " + std::to_string(out.failures) + " of " + std::to_string(b_count) +
                   " replicates failed (" + std::to_string(100.0 * failure_rate) + "%)");

  out.result.level = options.level;
  for (const auto& [name, values] : out.replicates)
    out.result.intervals[name] = percentile_interval(values, options.level);
  out.result.diagnostics["boot_reps"] = static_cast<double>(b_count);
  out.result.diagnostics["boot_failures"] = static_cast<double>(out.failures);
  return out;
}

}  // namespace mecal
