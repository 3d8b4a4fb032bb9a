#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mecal/core_model.hpp"
#include "mecal/random.hpp"

namespace mecal {

struct PriorConfig {
  double beta_variance = 1e4;
  /// Informative variance for betaX and betaZ (1.38 puts 95% of exp(beta) in (0.1, 10)).
  std::optional<double> exposure_beta_variance;
  double gamma_variance = 1e4;
  /// Gamma(shape, rate) prior for each precision 1/sigma2, 1/sigma2_U, 1/sigma2_XgZ.
  double precision_shape = 0.5;
  double precision_rate = 0.5;
  /// Gamma-process prior: confidence c and prior hazard rate r, H*(t) = r t.
  double gp_c = 0.001;
  double gp_rate = 0.01;
  /// Exponential prior rate for the Weibull shape.
  double weibull_shape_prior_rate = 0.001;
  /// Put the Weibull coefficient priors on phi_k = -beta_k / shape instead of beta_k.
  bool weibull_beta_transform = true;
  double weibull_phi_variance = 1e6;
  double nu_variance = 1e4;
  /// Coefficients of the logistic model for a binary covariate with missing values.
  double alpha_variance = 1e4;
  /// Holds sigma2_U fixed. Zero means X is observed exactly as the mean measurement.
  std::optional<double> fixed_sigma2_U;
  std::optional<double> fixed_weibull_shape;

  /// Throws InputError unless every variance and rate is strictly positive.
  void validate() const;
};

struct MCMCConfig {
  int chains = 5;
  int burnin = 1000;
  int iterations = 5000;
  double rhat_threshold = 1.05;
  /// Each extension reruns every chain for iterations * 2^k further draws.
  int max_extensions = 3;
  bool split_rhat = false;
  int adapt_interval = 50;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Keep every latent_thin-th draw of the latent exposures.
  bool keep_latent_x = false;
  int latent_thin = 1;

  /// Defaults for the outcome kind (three chains for Cox).
  static MCMCConfig defaults_for(OutcomeKind kind);
  void validate() const;
};

/// Everything fixed for the sampler: data, design pieces and priors.
struct BayesModel {
  OutcomeSpec spec;
  PriorConfig priors;
  std::size_t n = 0;
  std::vector<std::string> covariate_names;
  /// Covariate values; missing binary entries hold the current imputation in ChainState.
  Eigen::MatrixXd z;
  /// (row, column) of every missing binary covariate entry.
  std::vector<std::pair<std::size_t, std::size_t>> missing_entries;
  /// Columns of z with missing binary entries and the fully observed columns used to predict them.
  std::vector<std::size_t> imputed_columns;
  std::vector<std::size_t> predictor_columns;

  std::vector<double> y;
  std::vector<int> yb;
  std::vector<double> time;
  std::vector<double> log_time;
  std::vector<int> event;
  std::vector<std::optional<double>> w1, w2;
  std::vector<int> n_meas;

  /// Cox: distinct event times, events per time, prior increments r * (t_j - t_{j-1}),
  /// and for every subject the number of event times <= its own time.
  std::vector<double> event_times;
  std::vector<int> event_counts;
  std::vector<double> prior_increments;
  std::vector<std::size_t> risk_end;

  bool has_shift() const { return spec.exam_shift; }
  bool has_intercept() const { return spec.has_intercept(); }
  /// Number of outcome coefficients.
  Eigen::Index n_beta() const;
  std::vector<std::string> beta_names() const;
  /// Prior variance of the j-th outcome coefficient.
  double beta_prior_variance(Eigen::Index j) const;
};

/// Builds the sampler model. Throws InputError on invalid data for Bayes
/// (missing covariates that are not declared binary, Cox without events).
BayesModel make_bayes_model(const MEDataset& d, const OutcomeSpec& spec, const PriorConfig& priors);

struct ProposalScale {
  double scale = 1.0;
  Eigen::MatrixXd covariance;  // empty for scalar blocks
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct ChainState {
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  Eigen::VectorXd gamma;  // (gamma0, gammaZ...)
  double sigma2_XgZ = 1.0;
  double sigma2_U = 1.0;
  double nu = 0.0;
  Eigen::VectorXd x;
  /// Current covariate values, imputed entries included.
  Eigen::MatrixXd z;
  /// One coefficient vector (intercept, predictor columns...) per imputed column.
  std::vector<Eigen::VectorXd> alpha;
  Eigen::VectorXd hazard_increments;
  /// Cox: cumulative baseline hazard at each subject's own time.
  Eigen::VectorXd subject_hazard;
  double shape = 1.0;

  ProposalScale x_proposal;
  ProposalScale beta_proposal;
  ProposalScale shape_proposal;
  std::vector<ProposalScale> alpha_proposal;
};

/// Starting values: X from the measurement means, beta and gamma from naive
/// fits jittered uniformly by up to two standard errors when `overdisperse`.
ChainState initial_state(const BayesModel& m, Rng& rng, bool overdisperse);

/// Outcome linear predictor of subject i without the exposure term.
double outcome_offset(const BayesModel& m, const ChainState& s, std::size_t i);
/// Log outcome density of subject i given exposure x and offset (linear predictor minus betaX x).
double outcome_loglik_i(const BayesModel& m, const ChainState& s, std::size_t i, double x, double offset);

struct NormalConditional {
  double mean = 0.0;
  double variance = 0.0;
};
struct GammaConditional {
  double shape = 0.0;
  double rate = 0.0;
};

/// Closed-form full conditionals.
NormalConditional latent_x_conditional_linear(const BayesModel& m, const ChainState& s, std::size_t i);
/// Measurement and covariate-model part of X_i's conditional (what remains when the outcome factor is dropped).
NormalConditional latent_x_prior_part(const BayesModel& m, const ChainState& s, std::size_t i);
/// Multivariate normal conditional of the linear-outcome coefficients given sigma2 and X.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> beta_conditional_linear(const BayesModel& m, const ChainState& s);
std::pair<Eigen::VectorXd, Eigen::MatrixXd> gamma_conditional(const BayesModel& m, const ChainState& s);
GammaConditional residual_precision_conditional(const BayesModel& m, const ChainState& s);
GammaConditional exposure_precision_conditional(const BayesModel& m, const ChainState& s);
GammaConditional error_precision_conditional(const BayesModel& m, const ChainState& s);
NormalConditional shift_conditional(const BayesModel& m, const ChainState& s);
GammaConditional hazard_increment_conditional(const BayesModel& m, const ChainState& s, std::size_t j);
/// P(z = 1 | rest) for a missing binary entry, by evaluating both states.
double binary_imputation_probability(const BayesModel& m, const ChainState& s, std::size_t entry);

/// Recomputes subject_hazard after hazard_increments change.
void refresh_subject_hazard(const BayesModel& m, ChainState& s);

/// Pieces of one Gibbs sweep. MH blocks propose with the scales held in the
/// state and count acceptances; run_mcmc adapts scales between burn-in sweeps.
void update_latent_x(const BayesModel& m, ChainState& s, Rng& rng);
void update_regression_block(const BayesModel& m, ChainState& s, Rng& rng);
void update_gamma_process(const BayesModel& m, ChainState& s, Rng& rng);
void impute_binary_covariate(const BayesModel& m, ChainState& s, Rng& rng);
void weibull_outcome_update(const BayesModel& m, ChainState& s, Rng& rng);
/// Coordinates the outcome MH block moves in: beta, or phi = -beta / shape for
/// the transformed Weibull prior.
Eigen::VectorXd outcome_block_coordinates(const BayesModel& m, const ChainState& s);
/// Full sweep in the fixed order: X, hazard, outcome, measurement side, imputation.
void gibbs_sweep(const BayesModel& m, ChainState& s, Rng& rng);

struct ChainResult {
  std::vector<std::string> names;
  /// draws[k][t]: parameter k at retained iteration t.
  std::vector<std::vector<double>> draws;
  std::map<std::string, double> acceptance_rates;
  std::map<std::string, double> burnin_scales;
  std::map<std::string, double> final_scales;
  /// Retained latent exposure draws, one row per kept iteration.
  std::vector<std::vector<double>> latent_x;
  /// Cox: posterior mean of each hazard increment over the retained draws.
  std::vector<double> hazard_increment_means;
};

/// Gelman-Rubin potential scale reduction sqrt((n-1)/n + B/(n W)) per
/// parameter; chains[c][t]. Split halves each chain first when `split`.
double compute_rhat(const std::vector<std::vector<double>>& chains, bool split = false);

struct PosteriorSummary {
  double mean = 0.0;
  double sd = 0.0;
  Interval interval;
  /// The interval's two arms differ by more than 10% of its width.
  bool asymmetric = false;
};

PosteriorSummary posterior_summary(const std::vector<std::vector<double>>& chains, double level = 0.95);

struct McmcResult {
  std::vector<ChainResult> chains;
  std::vector<std::string> monitored;
  std::map<std::string, double> rhat;
  bool converged = true;
  int extensions = 0;
  int iterations_per_chain = 0;
  int latent_thin = 1;
  std::map<std::string, PosteriorSummary> summary;
  std::vector<double> event_times;
  FitResult fit;
};

/// Multi-chain MH-within-Gibbs with Rhat-driven extensions.
McmcResult run_mcmc(const MEDataset& d, const OutcomeSpec& spec, const PriorConfig& priors,
                    const MCMCConfig& cfg, double level = 0.95);

/// One row per retained iteration: chain, iteration, then every parameter.
void write_draws_csv(std::ostream& out, const McmcResult& r);
/// One row per kept iteration: chain, iteration, x_1..x_n.
void write_latent_csv(std::ostream& out, const McmcResult& r);

}  // namespace mecal
