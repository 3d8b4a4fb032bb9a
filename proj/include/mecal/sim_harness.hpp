#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mecal/bayes_engine.hpp"
#include "mecal/core_model.hpp"

namespace mecal {

/// One cell of a simulation grid. `effect` is R^2 for linear outcomes and
/// betaX (= betaZ) otherwise.
struct Scenario {
  OutcomeKind kind = OutcomeKind::Linear;
  std::size_t n = 1000;
  double reliability = 0.7;
  double effect = 0.5;
  double replication_fraction = 0.10;
  int reps = 200;
  std::uint64_t seed = 1;
  /// No measurement error: sigma2_U = 0 and W1 = W2 = X.
  bool zero_error = false;

  void validate() const;
};

/// Population values implied by a scenario.
struct Nuisance {
  double sigma2_U = 0.0;
  double beta0 = 0.0;
  double beta_x = 1.0;
  double beta_z = 1.0;
  /// Linear residual variance.
  double sigma2 = 0.0;
  /// Weibull scale for the Cox design (hazard kappa lambda t^(kappa-1) e^lp).
  double lambda = 0.0;
  double kappa = 2.0;
  double follow_up = 10.0;
};

constexpr double kCovXZ = 0.25;

/// Solves for the logistic intercept giving marginal P(Y = 1) = target, by
/// bisection on a fixed set of `draws` Monte-Carlo (X, Z) pairs.
double solve_logistic_intercept(double beta_x, double beta_z, double target = 0.2, std::size_t draws = 1000000,
                                std::uint64_t seed = 0x6d65636c);
/// Solves for lambda giving P(T < follow_up) = target under the Weibull hazard.
double solve_weibull_lambda(double beta_x, double beta_z, double kappa = 2.0, double follow_up = 10.0,
                            double target = 0.1, std::size_t draws = 1000000, std::uint64_t seed = 0x6d65636c);

/// Cached per (kind, effect); the root finders run once per process.
Nuisance derive_nuisance(const Scenario& s);

/// (seed, rep) fully determine the dataset. Covariate column is named "z".
MEDataset generate_linear(const Scenario& s, const Nuisance& p, std::size_t rep);
MEDataset generate_logistic(const Scenario& s, const Nuisance& p, std::size_t rep);
MEDataset generate_cox(const Scenario& s, const Nuisance& p, std::size_t rep);
MEDataset generate_dataset(const Scenario& s, const Nuisance& p, std::size_t rep);

/// Weibull design with an exam shift and a binary covariate missing at random
/// given the fully observed covariate and the event indicator.
struct MarDesign {
  std::size_t n = 2000;
  double missing_fraction = 0.40;
  double second_measurement_fraction = 0.30;
  double nu = 2.0;
  double beta0 = -3.0;
  double beta_x = 0.5;
  double beta_age = 0.4;
  double beta_smoker = 0.6;
  double shape = 1.5;
  double follow_up = 5.0;
  double sigma2_U = 0.5;
  double sigma2_XgZ = 1.0;
  double gamma0 = 0.0;
  double gamma_age = 0.3;
  double gamma_smoker = 0.4;
  double alpha0 = -0.5;
  double alpha_age = 0.7;
  /// Missingness logit: delta0 + delta_age * age + delta_event * event.
  double delta_age = 0.8;
  double delta_event = 0.7;
  std::uint64_t seed = 1;
};

/// Intercept of the missingness model giving the requested missing fraction.
double solve_missingness_intercept(const MarDesign& d, std::size_t draws = 200000);
/// Columns "age" (complete) and "smoker" (binary, missing at random).
MEDataset generate_mar_weibull(const MarDesign& d, double delta0, std::size_t rep);

/// Priors used for the simulation designs: vague everywhere, N(0, 1.38) on
/// betaX and betaZ for logistic and survival outcomes.
PriorConfig simulation_priors(OutcomeKind kind);

struct MethodRecord {
  bool ok = false;
  double estimate = 0.0;
  std::optional<Interval> interval;
  bool converged = true;
  std::string error;
};

struct ReplicateRecord {
  std::size_t rep = 0;
  std::map<Method, MethodRecord> methods;
};

struct MethodSummary {
  int used = 0;
  int failed = 0;
  int nonconverged = 0;
  double mean = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double sd_se = 0.0;
  std::optional<double> coverage;
  std::optional<double> coverage_se;
};

struct ScenarioResult {
  Scenario scenario;
  Nuisance nuisance;
  std::map<Method, MethodSummary> summary;
  std::vector<ReplicateRecord> replicates;

  double truth() const;
};

struct RunOptions {
  std::vector<Method> methods{Method::RcEfficient, Method::Bayes};
  MCMCConfig mcmc;
  std::optional<PriorConfig> priors;  // simulation_priors(kind) when empty
  /// Bootstrap replicates for RC intervals; 0 skips RC coverage.
  int boot_reps = 0;
  unsigned threads = 1;
};

/// Aggregates per-method records; failed replicates are excluded and counted,
/// non-converged Bayes replicates are kept and counted.
std::map<Method, MethodSummary> summarize(const std::vector<ReplicateRecord>& reps,
                                          const std::vector<Method>& methods, double truth);

/// Fits every method to each replicate; replicates run in parallel and each
/// one draws only from its own sub-seed.
ScenarioResult run_scenario(const Scenario& s, const RunOptions& opt);

enum class TableFormat { Markdown, Csv, Latex };
TableFormat parse_table_format(const std::string& s);

/// Reliability, effect, RC mean (SD), Bayes mean (SD), Bayes coverage, then
/// Naive when present. Columns no result carries are omitted.
std::string render_table(const std::vector<ScenarioResult>& results, TableFormat format, bool with_mcse = false);

nlohmann::ordered_json to_json(const ScenarioResult& r);
ScenarioResult scenario_result_from_json(const nlohmann::ordered_json& j);

}  // namespace mecal
