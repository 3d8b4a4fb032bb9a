#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mecal/core_model.hpp"
#include "mecal/errors.hpp"

namespace mecal {

struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> names;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
};

/// Design with optional intercept, the exposure column, then every covariate
/// of `d` (which must be fully observed on the rows used).
DesignMatrix outcome_design(const std::vector<double>& exposure, const MEDataset& d, bool intercept);

struct IterationOptions {
  int max_iter = 100;
  double tol = 1e-8;
};

struct OlsFit {
  Eigen::VectorXd coefficients;
  double residual_variance = 0.0;
  Eigen::MatrixXd covariance;
};

/// Least squares through a Householder QR. Throws SingularDesignError naming
/// the first column that is linearly dependent on the ones before it.
OlsFit fit_ols(const DesignMatrix& x, const Eigen::VectorXd& y);

struct NewtonFit {
  Eigen::VectorXd coefficients;
  /// Inverse observed information; NaN-filled when the information is singular.
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  int iterations = 0;
  /// Log-likelihood after every accepted step, starting value first.
  std::vector<double> loglik_trace;
};

NewtonFit fit_logistic_irls(const DesignMatrix& x, const std::vector<int>& y, IterationOptions opt = {});

/// Cox partial likelihood with Breslow handling of tied event times.
NewtonFit fit_cox_partial(const std::vector<double>& times, const std::vector<int>& events,
                          const DesignMatrix& x, IterationOptions opt = {});

/// Breslow partial log-likelihood at `beta`.
double cox_partial_loglik(const std::vector<double>& times, const std::vector<int>& events,
                          const Eigen::MatrixXd& x, const Eigen::VectorXd& beta);

/// Breslow baseline hazard increments at the distinct event times, given the
/// linear predictor of every subject.
HazardIncrements breslow_increments(const std::vector<double>& times, const std::vector<int>& events,
                                    const Eigen::VectorXd& linear_predictor);

struct WeibullFit {
  /// Coefficients of the log hazard, including the intercept column if the design has one.
  Eigen::VectorXd coefficients;
  double shape = 1.0;
  /// Covariance of (coefficients..., shape).
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> loglik_trace;
};

/// Maximum likelihood for the hazard r t^(r-1) exp(x'beta).
WeibullFit fit_weibull_ml(const std::vector<double>& times, const std::vector<int>& events,
                          const DesignMatrix& x, IterationOptions opt = {});

double weibull_loglik(const std::vector<double>& times, const std::vector<int>& events,
                      const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double shape);

struct MixedModelFit {
  double gamma0 = 0.0;
  std::vector<double> gammaZ;
  double sigma2_XgZ = 0.0;
  double sigma2_U = 0.0;
  std::optional<double> nu;
  double log_likelihood = 0.0;
  bool sigma2_XgZ_at_boundary = false;
  bool sigma2_U_at_boundary = false;
};

/// Random-intercepts model W_ij = gamma0 + gammaZ'Z_i + b_i [+ nu 1{j=2}] + U_ij,
/// b_i ~ N(0, sigma2_XgZ), U_ij ~ N(0, sigma2_U), by maximum likelihood.
/// Individuals without measurements are ignored; covariates must be observed.
MixedModelFit fit_mixed_model_ml(const MEDataset& d, bool include_shift);

/// Marginal log-likelihood of the measurements at the given parameters.
double mixed_model_loglik(const MEDataset& d, const MixedModelFit& params);

}  // namespace mecal
