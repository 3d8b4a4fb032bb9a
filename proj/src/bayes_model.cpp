#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mecal/bayes_engine.hpp"
#include "mecal/errors.hpp"
#include "mecal/stats_fitters.hpp"

namespace mecal {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Eigen::Index exposure_index(const BayesModel& m) { return m.has_intercept() ? 1 : 0; }

/// Draw from N(P^-1 b, P^-1) given the precision P.
VectorXd draw_from_precision(const MatrixXd& precision, const VectorXd& b, Rng& rng) {
  Eigen::LLT<MatrixXd> llt(precision);
  VectorXd eps(b.size());
  for (Eigen::Index j = 0; j < eps.size(); ++j) eps(j) = rng.normal();
  return llt.solve(b) + llt.matrixU().solve(eps);
}

VectorXd rw_step(const ProposalScale& p, Rng& rng) {
  const Eigen::Index k = p.covariance.rows();
  VectorXd eps(k);
  for (Eigen::Index j = 0; j < k; ++j) eps(j) = rng.normal();
  Eigen::LLT<MatrixXd> llt(p.covariance);
  return p.scale * VectorXd(llt.matrixL() * eps);
}

bool mh_accept(double log_ratio, Rng& rng) {
  return log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
}

VectorXd linear_predictor(const BayesModel& m, const ChainState& s, const VectorXd& beta) {
  const Eigen::Index jx = exposure_index(m);
  const auto p = static_cast<Eigen::Index>(m.covariate_names.size());
  VectorXd lp = beta(jx) * s.x;
  if (p > 0) lp.noalias() += s.z * beta.segment(jx + 1, p);
  if (m.has_intercept()) lp.array() += beta(0);
  return lp;
}

double kind_loglik(const BayesModel& m, const ChainState& s, std::size_t i, double lp, double shape) {
  switch (m.spec.kind) {
    case OutcomeKind::Linear: {
      const double r = m.y[i] - lp;
      return -0.5 * r * r / s.sigma2;
    }
    case OutcomeKind::Logistic:
      return m.yb[i] * lp - log1p_exp(lp);
    case OutcomeKind::Cox:
      return m.event[i] * lp - std::exp(lp) * s.subject_hazard(static_cast<Eigen::Index>(i));
    case OutcomeKind::Weibull: {
      const double rl = shape * m.log_time[i];
      const double ev = m.event[i] ? std::log(shape) + rl - m.log_time[i] + lp : 0.0;
      return ev - std::exp(rl + lp);
    }
  }
  return 0.0;
}

double outcome_loglik_all(const BayesModel& m, const ChainState& s, const VectorXd& beta, double shape) {
  if (m.n == 0) return 0.0;
  const VectorXd lp = linear_predictor(m, s, beta);
  double ll = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) ll += kind_loglik(m, s, i, lp(static_cast<Eigen::Index>(i)), shape);
  return ll;
}

double beta_log_prior(const BayesModel& m, const VectorXd& beta) {
  double lp = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) lp -= 0.5 * beta(j) * beta(j) / m.beta_prior_variance(j);
  return lp;
}

bool weibull_transformed(const BayesModel& m) {
  return m.spec.kind == OutcomeKind::Weibull && m.priors.weibull_beta_transform;
}

double shift_of(const BayesModel& m, const ChainState& s) { return m.has_shift() ? s.nu : 0.0; }

double measurement_mean(const BayesModel& m, std::size_t i, double shift) {
  double sum = 0.0;
  int k = 0;
  if (m.w1[i]) sum += *m.w1[i], ++k;
  if (m.w2[i]) sum += *m.w2[i] - shift, ++k;
  return k ? sum / k : 0.0;
}

MatrixXd gamma_design(const ChainState& s) {
  MatrixXd zt(s.z.rows(), s.z.cols() + 1);
  zt.col(0).setOnes();
  zt.rightCols(s.z.cols()) = s.z;
  return zt;
}

double gamma_mean_i(const ChainState& s, std::size_t i) {
  const auto r = static_cast<Eigen::Index>(i);
  double mu = s.gamma(0);
  for (Eigen::Index k = 0; k < s.z.cols(); ++k) mu += s.gamma(k + 1) * s.z(r, k);
  return mu;
}

/// Sum of exp(lp) over the risk set of every event time.
VectorXd risk_sums(const BayesModel& m, const ChainState& s) {
  const std::size_t J = m.event_times.size();
  std::vector<double> add(J + 1, 0.0);
  const VectorXd lp = linear_predictor(m, s, s.beta);
  for (std::size_t i = 0; i < m.n; ++i) add[m.risk_end[i]] += std::exp(lp(static_cast<Eigen::Index>(i)));
  VectorXd sums(static_cast<Eigen::Index>(J));
  double acc = 0.0;
  for (std::size_t e = J; e > 0; --e) {
    acc += add[e];
    sums(static_cast<Eigen::Index>(e - 1)) = acc;
  }
  return sums;
}

std::size_t alpha_slot(const BayesModel& m, std::size_t column) {
  return static_cast<std::size_t>(
      std::find(m.imputed_columns.begin(), m.imputed_columns.end(), column) - m.imputed_columns.begin());
}

double alpha_linear(const BayesModel& m, const ChainState& s, std::size_t slot, std::size_t i) {
  const VectorXd& a = s.alpha[slot];
  double v = a(0);
  for (std::size_t q = 0; q < m.predictor_columns.size(); ++q)
    v += a(static_cast<Eigen::Index>(q) + 1) * s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m.predictor_columns[q]));
  return v;
}

double alpha_loglik(const BayesModel& m, const ChainState& s, std::size_t slot) {
  const auto col = static_cast<Eigen::Index>(m.imputed_columns[slot]);
  double ll = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double a = alpha_linear(m, s, slot, i);
    ll += s.z(static_cast<Eigen::Index>(i), col) * a - log1p_exp(a);
  }
  const VectorXd& al = s.alpha[slot];
  return ll - 0.5 * al.squaredNorm() / m.priors.alpha_variance;
}

MatrixXd fallback_covariance(Eigen::Index k, double prior_variance, std::size_t n) {
  return MatrixXd::Identity(k, k) * (n == 0 ? prior_variance : 0.01);
}

double scale_for(Eigen::Index dim) { return 2.38 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(dim, 1))); }

}  // namespace

void refresh_subject_hazard(const BayesModel& m, ChainState& s) {
  std::vector<double> cum(m.event_times.size() + 1, 0.0);
  for (std::size_t j = 0; j < m.event_times.size(); ++j)
    cum[j + 1] = cum[j] + s.hazard_increments(static_cast<Eigen::Index>(j));
  s.subject_hazard.resize(static_cast<Eigen::Index>(m.n));
  for (std::size_t i = 0; i < m.n; ++i) s.subject_hazard(static_cast<Eigen::Index>(i)) = cum[m.risk_end[i]];
}

void PriorConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError(std::string("prior ") + what + " must be positive");
  };
  positive(beta_variance, "beta variance");
  if (exposure_beta_variance) positive(*exposure_beta_variance, "informative beta variance");
  positive(gamma_variance, "gamma variance");
  positive(precision_shape, "precision shape");
  positive(precision_rate, "precision rate");
  positive(gp_c, "gamma-process c");
  positive(gp_rate, "gamma-process rate");
  positive(weibull_shape_prior_rate, "Weibull shape rate");
  positive(weibull_phi_variance, "Weibull phi variance");
  positive(nu_variance, "shift variance");
  positive(alpha_variance, "imputation-model variance");
  if (fixed_sigma2_U && (*fixed_sigma2_U < 0.0 || !std::isfinite(*fixed_sigma2_U)))
    throw InputError("fixed sigma2_U must be non-negative");
  if (fixed_weibull_shape) positive(*fixed_weibull_shape, "fixed Weibull shape");
}

MCMCConfig MCMCConfig::defaults_for(OutcomeKind kind) {
  MCMCConfig c;
  if (kind == OutcomeKind::Cox) c.chains = 3;
  return c;
}

void MCMCConfig::validate() const {
  if (chains < 1 || burnin < 0 || iterations < 1 || max_extensions < 0 || adapt_interval < 1 || latent_thin < 1)
    throw InputError("MCMC counts must be positive");
  if (!(rhat_threshold > 1.0)) throw InputError("Rhat threshold must exceed 1");
}

Eigen::Index BayesModel::n_beta() const {
  return (has_intercept() ? 1 : 0) + 1 + static_cast<Eigen::Index>(covariate_names.size());
}

std::vector<std::string> BayesModel::beta_names() const {
  std::vector<std::string> names;
  if (has_intercept()) names.push_back("beta0");
  names.push_back("betaX");
  for (const auto& c : covariate_names) names.push_back("beta_" + c);
  return names;
}

double BayesModel::beta_prior_variance(Eigen::Index j) const {
  if (has_intercept() && j == 0) return priors.beta_variance;
  return priors.exposure_beta_variance.value_or(priors.beta_variance);
}

BayesModel make_bayes_model(const MEDataset& d, const OutcomeSpec& spec, const PriorConfig& priors) {
  priors.validate();
  const auto violations = validate_dataset(d, spec);
  if (!violations.empty()) {
    std::string msg = "invalid dataset: " + violations.front().message;
    if (violations.size() > 1) msg += " (and " + std::to_string(violations.size() - 1) + " more)";
    throw InputError(msg);
  }
  BayesModel m;
  m.spec = spec;
  m.priors = priors;
  m.n = d.n();
  const auto n = static_cast<Eigen::Index>(m.n);
  const auto p = static_cast<Eigen::Index>(d.p());
  m.z = MatrixXd::Zero(n, p);
  for (std::size_t k = 0; k < d.p(); ++k) {
    const auto& c = d.z[k];
    m.covariate_names.push_back(c.name);
    bool any_missing = false;
    for (std::size_t i = 0; i < m.n; ++i) {
      if (c.observed(i)) {
        m.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = c.values[i];
      } else {
        m.missing_entries.emplace_back(i, k);
        any_missing = true;
      }
    }
    (any_missing ? m.imputed_columns : m.predictor_columns).push_back(k);
  }

  for (const auto& w : d.w) {
    m.w1.push_back(w.w1);
    m.w2.push_back(w.w2);
    m.n_meas.push_back(w.count());
  }
  if (priors.fixed_sigma2_U && *priors.fixed_sigma2_U == 0.0)
    for (std::size_t i = 0; i < m.n; ++i)
      if (m.n_meas[i] == 0)
        throw InputError("row " + std::to_string(i + 1) + ": an exactly observed exposure needs a measurement");

  switch (spec.kind) {
    case OutcomeKind::Linear:
      m.y = d.y();
      break;
    case OutcomeKind::Logistic:
      m.yb = d.binary_y();
      break;
    case OutcomeKind::Cox:
    case OutcomeKind::Weibull: {
      const auto& s = d.survival();
      m.time = s.time;
      m.event = s.event;
      for (double t : s.time) m.log_time.push_back(std::log(t));
      break;
    }
  }

  if (spec.kind == OutcomeKind::Cox) {
    for (std::size_t i = 0; i < m.n; ++i)
      if (m.event[i]) m.event_times.push_back(m.time[i]);
    if (m.event_times.empty() && m.n > 0) throw InsufficientDataError("Cox model needs at least one event");
    std::sort(m.event_times.begin(), m.event_times.end());
    m.event_times.erase(std::unique(m.event_times.begin(), m.event_times.end()), m.event_times.end());
    m.event_counts.assign(m.event_times.size(), 0);
    for (std::size_t i = 0; i < m.n; ++i) {
      const auto e = static_cast<std::size_t>(
          std::upper_bound(m.event_times.begin(), m.event_times.end(), m.time[i]) - m.event_times.begin());
      m.risk_end.push_back(e);
      if (m.event[i]) ++m.event_counts[e - 1];
    }
    double prev = 0.0;
    for (double t : m.event_times) {
      m.prior_increments.push_back(priors.gp_rate * (t - prev));
      prev = t;
    }
  }
  return m;
}

double outcome_offset(const BayesModel& m, const ChainState& s, std::size_t i) {
  const Eigen::Index jx = exposure_index(m);
  double off = m.has_intercept() ? s.beta(0) : 0.0;
  for (Eigen::Index k = 0; k < s.z.cols(); ++k) off += s.beta(jx + 1 + k) * s.z(static_cast<Eigen::Index>(i), k);
  return off;
}

double outcome_loglik_i(const BayesModel& m, const ChainState& s, std::size_t i, double x, double offset) {
  return kind_loglik(m, s, i, offset + s.beta(exposure_index(m)) * x, s.shape);
}

NormalConditional latent_x_prior_part(const BayesModel& m, const ChainState& s, std::size_t i) {
  double precision = 1.0 / s.sigma2_XgZ;
  double weighted = gamma_mean_i(s, i) / s.sigma2_XgZ;
  if (m.n_meas[i] > 0) {
    precision += m.n_meas[i] / s.sigma2_U;
    weighted += m.n_meas[i] * measurement_mean(m, i, shift_of(m, s)) / s.sigma2_U;
  }
  return {weighted / precision, 1.0 / precision};
}

NormalConditional latent_x_conditional_linear(const BayesModel& m, const ChainState& s, std::size_t i) {
  const NormalConditional base = latent_x_prior_part(m, s, i);
  const double bx = s.beta(exposure_index(m));
  const double precision = 1.0 / base.variance + bx * bx / s.sigma2;
  const double weighted = base.mean / base.variance + bx * (m.y[i] - outcome_offset(m, s, i)) / s.sigma2;
  return {weighted / precision, 1.0 / precision};
}

void update_latent_x(const BayesModel& m, ChainState& s, Rng& rng) {
  if (m.priors.fixed_sigma2_U && *m.priors.fixed_sigma2_U == 0.0) return;
  for (std::size_t i = 0; i < m.n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (m.spec.kind == OutcomeKind::Linear) {
      const NormalConditional c = latent_x_conditional_linear(m, s, i);
      s.x(r) = rng.normal(c.mean, std::sqrt(c.variance));
      continue;
    }
    const NormalConditional base = latent_x_prior_part(m, s, i);
    const double offset = outcome_offset(m, s, i);
    const double cur = s.x(r);
    const double prop = cur + s.x_proposal.scale * std::sqrt(base.variance) * rng.normal();
    const double log_ratio = outcome_loglik_i(m, s, i, prop, offset) - outcome_loglik_i(m, s, i, cur, offset) -
                             0.5 * ((prop - base.mean) * (prop - base.mean) - (cur - base.mean) * (cur - base.mean)) /
                                 base.variance;
    ++s.x_proposal.proposed;
    if (mh_accept(log_ratio, rng)) {
      s.x(r) = prop;
      ++s.x_proposal.accepted;
    }
  }
}

std::pair<VectorXd, MatrixXd> beta_conditional_linear(const BayesModel& m, const ChainState& s) {
  const Eigen::Index k = m.n_beta();
  MatrixXd design(static_cast<Eigen::Index>(m.n), k);
  const Eigen::Index jx = exposure_index(m);
  if (m.has_intercept()) design.col(0).setOnes();
  design.col(jx) = s.x;
  if (s.z.cols() > 0) design.rightCols(s.z.cols()) = s.z;
  const VectorXd y = Eigen::Map<const VectorXd>(m.y.data(), static_cast<Eigen::Index>(m.y.size()));
  MatrixXd precision = design.transpose() * design / s.sigma2;
  for (Eigen::Index j = 0; j < k; ++j) precision(j, j) += 1.0 / m.beta_prior_variance(j);
  const VectorXd b = design.transpose() * y / s.sigma2;
  Eigen::LLT<MatrixXd> llt(precision);
  return {llt.solve(b), llt.solve(MatrixXd::Identity(k, k))};
}

std::pair<VectorXd, MatrixXd> gamma_conditional(const BayesModel& m, const ChainState& s) {
  const MatrixXd zt = gamma_design(s);
  const Eigen::Index k = zt.cols();
  MatrixXd precision = zt.transpose() * zt / s.sigma2_XgZ;
  precision.diagonal().array() += 1.0 / m.priors.gamma_variance;
  const VectorXd b = zt.transpose() * s.x / s.sigma2_XgZ;
  Eigen::LLT<MatrixXd> llt(precision);
  return {llt.solve(b), llt.solve(MatrixXd::Identity(k, k))};
}

GammaConditional residual_precision_conditional(const BayesModel& m, const ChainState& s) {
  const VectorXd lp = linear_predictor(m, s, s.beta);
  double rss = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) rss += std::pow(m.y[i] - lp(static_cast<Eigen::Index>(i)), 2);
  return {m.priors.precision_shape + 0.5 * static_cast<double>(m.n), m.priors.precision_rate + 0.5 * rss};
}

GammaConditional exposure_precision_conditional(const BayesModel& m, const ChainState& s) {
  double ss = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) ss += std::pow(s.x(static_cast<Eigen::Index>(i)) - gamma_mean_i(s, i), 2);
  return {m.priors.precision_shape + 0.5 * static_cast<double>(m.n), m.priors.precision_rate + 0.5 * ss};
}

GammaConditional error_precision_conditional(const BayesModel& m, const ChainState& s) {
  double ss = 0.0;
  int count = 0;
  const double shift = shift_of(m, s);
  for (std::size_t i = 0; i < m.n; ++i) {
    const double x = s.x(static_cast<Eigen::Index>(i));
    if (m.w1[i]) ss += std::pow(*m.w1[i] - x, 2), ++count;
    if (m.w2[i]) ss += std::pow(*m.w2[i] - x - shift, 2), ++count;
  }
  return {m.priors.precision_shape + 0.5 * count, m.priors.precision_rate + 0.5 * ss};
}

NormalConditional shift_conditional(const BayesModel& m, const ChainState& s) {
  double precision = 1.0 / m.priors.nu_variance, weighted = 0.0;
  for (std::size_t i = 0; i < m.n; ++i)
    if (m.w2[i]) {
      precision += 1.0 / s.sigma2_U;
      weighted += (*m.w2[i] - s.x(static_cast<Eigen::Index>(i))) / s.sigma2_U;
    }
  return {weighted / precision, 1.0 / precision};
}

void update_regression_block(const BayesModel& m, ChainState& s, Rng& rng) {
  switch (m.spec.kind) {
    case OutcomeKind::Linear: {
      const Eigen::Index k = m.n_beta();
      const auto [mean, cov] = beta_conditional_linear(m, s);
      VectorXd eps(k);
      for (Eigen::Index j = 0; j < k; ++j) eps(j) = rng.normal();
      s.beta = mean + Eigen::LLT<MatrixXd>(cov).matrixL() * eps;
      const GammaConditional g = residual_precision_conditional(m, s);
      s.sigma2 = 1.0 / rng.gamma(g.shape, g.rate);
      break;
    }
    case OutcomeKind::Logistic:
    case OutcomeKind::Cox: {
      const VectorXd prop = s.beta + rw_step(s.beta_proposal, rng);
      const double log_ratio = outcome_loglik_all(m, s, prop, s.shape) + beta_log_prior(m, prop) -
                               outcome_loglik_all(m, s, s.beta, s.shape) - beta_log_prior(m, s.beta);
      ++s.beta_proposal.proposed;
      if (mh_accept(log_ratio, rng)) {
        s.beta = prop;
        ++s.beta_proposal.accepted;
      }
      break;
    }
    case OutcomeKind::Weibull:
      break;  // weibull_outcome_update
  }

  // Exposure model.
  {
    const MatrixXd zt = gamma_design(s);
    MatrixXd precision = zt.transpose() * zt / s.sigma2_XgZ;
    precision.diagonal().array() += 1.0 / m.priors.gamma_variance;
    s.gamma = draw_from_precision(precision, zt.transpose() * s.x / s.sigma2_XgZ, rng);
    const GammaConditional g = exposure_precision_conditional(m, s);
    s.sigma2_XgZ = 1.0 / rng.gamma(g.shape, g.rate);
  }
  // Measurement model.
  if (m.priors.fixed_sigma2_U) {
    s.sigma2_U = *m.priors.fixed_sigma2_U;
  } else {
    const GammaConditional g = error_precision_conditional(m, s);
    s.sigma2_U = 1.0 / rng.gamma(g.shape, g.rate);
  }
  if (m.has_shift() && s.sigma2_U > 0.0) {
    const NormalConditional c = shift_conditional(m, s);
    s.nu = rng.normal(c.mean, std::sqrt(c.variance));
  }
}

GammaConditional hazard_increment_conditional(const BayesModel& m, const ChainState& s, std::size_t j) {
  const VectorXd sums = risk_sums(m, s);
  return {m.priors.gp_c * m.prior_increments[j] + m.event_counts[j],
          m.priors.gp_c + sums(static_cast<Eigen::Index>(j))};
}

void update_gamma_process(const BayesModel& m, ChainState& s, Rng& rng) {
  if (m.spec.kind != OutcomeKind::Cox) return;
  const VectorXd sums = risk_sums(m, s);
  for (std::size_t j = 0; j < m.event_times.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    s.hazard_increments(r) =
        rng.gamma(m.priors.gp_c * m.prior_increments[j] + m.event_counts[j], m.priors.gp_c + sums(r));
  }
  refresh_subject_hazard(m, s);
}

double binary_imputation_probability(const BayesModel& m, const ChainState& s, std::size_t entry) {
  const auto [i, col] = m.missing_entries[entry];
  const auto r = static_cast<Eigen::Index>(i);
  const auto c = static_cast<Eigen::Index>(col);
  const std::size_t slot = alpha_slot(m, col);
  const double a = alpha_linear(m, s, slot, i);
  const Eigen::Index jx = exposure_index(m);
  const double base_offset = outcome_offset(m, s, i) - s.beta(jx + 1 + c) * s.z(r, c);
  const double base_mean = gamma_mean_i(s, i) - s.gamma(c + 1) * s.z(r, c);
  const double x = s.x(r);
  double l[2];
  for (int v = 0; v < 2; ++v) {
    const double offset = base_offset + s.beta(jx + 1 + c) * v;
    const double mu = base_mean + s.gamma(c + 1) * v;
    l[v] = v * a - log1p_exp(a) + outcome_loglik_i(m, s, i, x, offset) -
           0.5 * (x - mu) * (x - mu) / s.sigma2_XgZ;
  }
  return 1.0 / (1.0 + std::exp(l[0] - l[1]));
}

void impute_binary_covariate(const BayesModel& m, ChainState& s, Rng& rng) {
  for (std::size_t e = 0; e < m.missing_entries.size(); ++e) {
    const double p1 = binary_imputation_probability(m, s, e);
    const auto [i, col] = m.missing_entries[e];
    s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = rng.bernoulli(p1) ? 1.0 : 0.0;
  }
  for (std::size_t slot = 0; slot < m.imputed_columns.size(); ++slot) {
    ProposalScale& prop = s.alpha_proposal[slot];
    const VectorXd cur = s.alpha[slot];
    const double before = alpha_loglik(m, s, slot);
    s.alpha[slot] = cur + rw_step(prop, rng);
    const double after = alpha_loglik(m, s, slot);
    ++prop.proposed;
    if (mh_accept(after - before, rng)) {
      ++prop.accepted;
    } else {
      s.alpha[slot] = cur;
    }
  }
}

Eigen::VectorXd outcome_block_coordinates(const BayesModel& m, const ChainState& s) {
  if (weibull_transformed(m)) return -s.beta / s.shape;
  return s.beta;
}

void weibull_outcome_update(const BayesModel& m, ChainState& s, Rng& rng) {
  if (m.spec.kind != OutcomeKind::Weibull) return;
  const double rate = m.priors.weibull_shape_prior_rate;
  const bool transformed = weibull_transformed(m);

  // log-shape move; with the transform phi is held fixed so beta scales with r.
  if (!m.priors.fixed_weibull_shape) {
    const double cur_log = std::log(s.shape);
    const double prop_log = cur_log + s.shape_proposal.scale * rng.normal();
    const double prop_shape = std::exp(prop_log);
    const VectorXd prop_beta = transformed ? VectorXd(s.beta * (prop_shape / s.shape)) : s.beta;
    const double log_ratio = outcome_loglik_all(m, s, prop_beta, prop_shape) - rate * prop_shape + prop_log -
                             (outcome_loglik_all(m, s, s.beta, s.shape) - rate * s.shape + cur_log);
    ++s.shape_proposal.proposed;
    if (mh_accept(log_ratio, rng)) {
      s.shape = prop_shape;
      s.beta = prop_beta;
      ++s.shape_proposal.accepted;
    }
  } else {
    s.shape = *m.priors.fixed_weibull_shape;
  }

  const VectorXd step = rw_step(s.beta_proposal, rng);
  double log_ratio;
  VectorXd prop_beta;
  if (transformed) {
    const VectorXd phi = -s.beta / s.shape;
    const VectorXd prop_phi = phi + step;
    prop_beta = -s.shape * prop_phi;
    const double v = m.priors.weibull_phi_variance;
    log_ratio = outcome_loglik_all(m, s, prop_beta, s.shape) - 0.5 * prop_phi.squaredNorm() / v -
                (outcome_loglik_all(m, s, s.beta, s.shape) - 0.5 * phi.squaredNorm() / v);
  } else {
    prop_beta = s.beta + step;
    log_ratio = outcome_loglik_all(m, s, prop_beta, s.shape) + beta_log_prior(m, prop_beta) -
                outcome_loglik_all(m, s, s.beta, s.shape) - beta_log_prior(m, s.beta);
  }
  ++s.beta_proposal.proposed;
  if (mh_accept(log_ratio, rng)) {
    s.beta = prop_beta;
    ++s.beta_proposal.accepted;
  }
}

void gibbs_sweep(const BayesModel& m, ChainState& s, Rng& rng) {
  update_latent_x(m, s, rng);
  update_gamma_process(m, s, rng);
  weibull_outcome_update(m, s, rng);
  update_regression_block(m, s, rng);
  if (!m.missing_entries.empty()) impute_binary_covariate(m, s, rng);
}

ChainState initial_state(const BayesModel& m, Rng& rng, bool overdisperse) {
  ChainState s;
  const auto n = static_cast<Eigen::Index>(m.n);
  const Eigen::Index p = m.z.cols();
  auto jitter = [&](double se) {
    return overdisperse && std::isfinite(se) ? (2.0 * rng.uniform() - 1.0) * 2.0 * se : 0.0;
  };

  // Covariates: missing binary entries start from the observed proportion.
  s.z = m.z;
  for (std::size_t col : m.imputed_columns) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < m.n; ++i)
      if (std::none_of(m.missing_entries.begin(), m.missing_entries.end(),
                       [&](const auto& e) { return e.first == i && e.second == col; }))
        sum += m.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)), ++count;
    const double prob = count ? sum / count : 0.5;
    for (const auto& [i, c] : m.missing_entries)
      if (c == col) s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rng.bernoulli(prob) ? 1.0 : 0.0;
  }

  // Shift and exposure starting values.
  s.nu = 0.0;
  if (m.has_shift()) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < m.n; ++i)
      if (m.w1[i] && m.w2[i]) sum += *m.w2[i] - *m.w1[i], ++count;
    if (count) s.nu = sum / count;
  }
  s.x = VectorXd::Zero(n);
  std::vector<std::size_t> measured;
  for (std::size_t i = 0; i < m.n; ++i)
    if (m.n_meas[i] > 0) {
      s.x(static_cast<Eigen::Index>(i)) = measurement_mean(m, i, s.nu);
      measured.push_back(i);
    }

  // Exposure model from OLS of X on (1, Z) over measured rows.
  s.gamma = VectorXd::Zero(p + 1);
  VectorXd gamma_se = VectorXd::Constant(p + 1, std::numeric_limits<double>::quiet_NaN());
  try {
    DesignMatrix zt{MatrixXd(static_cast<Eigen::Index>(measured.size()), p + 1), {}};
    VectorXd xm(static_cast<Eigen::Index>(measured.size()));
    for (std::size_t r = 0; r < measured.size(); ++r) {
      const auto i = static_cast<Eigen::Index>(measured[r]);
      zt.x(static_cast<Eigen::Index>(r), 0) = 1.0;
      zt.x.row(static_cast<Eigen::Index>(r)).tail(p) = s.z.row(i);
      xm(static_cast<Eigen::Index>(r)) = s.x(i);
    }
    for (Eigen::Index j = 0; j <= p; ++j) zt.names.push_back("gamma" + std::to_string(j));
    const OlsFit g = fit_ols(zt, xm);
    s.gamma = g.coefficients;
    gamma_se = g.covariance.diagonal().cwiseSqrt();
  } catch (const FitError&) {
  } catch (const InputError&) {
  }
  for (std::size_t i = 0; i < m.n; ++i)
    if (m.n_meas[i] == 0) s.x(static_cast<Eigen::Index>(i)) = gamma_mean_i(s, i);

  // Measurement variances from the random-intercepts fit.
  double var_w = 1.0;
  if (measured.size() > 1) {
    double mean = 0.0;
    for (auto i : measured) mean += s.x(static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(measured.size());
    double ss = 0.0;
    for (auto i : measured) ss += std::pow(s.x(static_cast<Eigen::Index>(i)) - mean, 2);
    var_w = std::max(ss / static_cast<double>(measured.size() - 1), 1e-8);
  }
  s.sigma2_U = 0.5 * var_w;
  s.sigma2_XgZ = 0.5 * var_w;
  try {
    MEDataset md;
    md.outcome = ContinuousOutcome{std::vector<double>(m.n, 0.0)};
    for (std::size_t i = 0; i < m.n; ++i) md.w.push_back({m.w1[i], m.w2[i]});
    for (Eigen::Index k = 0; k < p; ++k) {
      Covariate c;
      c.name = m.covariate_names[static_cast<std::size_t>(k)];
      c.values.assign(s.z.col(k).data(), s.z.col(k).data() + n);
      c.present.assign(m.n, 1);
      md.z.push_back(std::move(c));
    }
    const MixedModelFit mm = fit_mixed_model_ml(md, m.has_shift());
    s.sigma2_U = std::max(mm.sigma2_U, 1e-3 * var_w);
    s.sigma2_XgZ = std::max(mm.sigma2_XgZ, 1e-3 * var_w);
  } catch (const FitError&) {
  } catch (const InputError&) {
  }
  if (m.priors.fixed_sigma2_U) s.sigma2_U = *m.priors.fixed_sigma2_U;
  for (Eigen::Index j = 0; j <= p; ++j) s.gamma(j) += jitter(gamma_se(j));

  // Outcome model from the naive fit on the starting exposures.
  const Eigen::Index k = m.n_beta();
  s.beta = VectorXd::Zero(k);
  MatrixXd beta_cov;
  double shape_se = std::numeric_limits<double>::quiet_NaN();
  DesignMatrix design{MatrixXd(n, k), m.beta_names()};
  {
    const Eigen::Index jx = exposure_index(m);
    if (m.has_intercept()) design.x.col(0).setOnes();
    design.x.col(jx) = s.x;
    if (p > 0) design.x.rightCols(p) = s.z;
  }
  try {
    switch (m.spec.kind) {
      case OutcomeKind::Linear: {
        const OlsFit f = fit_ols(design, Eigen::Map<const VectorXd>(m.y.data(), n));
        s.beta = f.coefficients;
        beta_cov = f.covariance;
        s.sigma2 = std::max(f.residual_variance, 1e-8);
        break;
      }
      case OutcomeKind::Logistic: {
        const NewtonFit f = fit_logistic_irls(design, m.yb);
        s.beta = f.coefficients;
        beta_cov = f.covariance;
        break;
      }
      case OutcomeKind::Cox: {
        const NewtonFit f = fit_cox_partial(m.time, m.event, design);
        s.beta = f.coefficients;
        beta_cov = f.covariance;
        break;
      }
      case OutcomeKind::Weibull: {
        const WeibullFit f = fit_weibull_ml(m.time, m.event, design);
        s.beta = f.coefficients;
        s.shape = f.shape;
        beta_cov = f.covariance.topLeftCorner(k, k);
        shape_se = std::sqrt(f.covariance(k, k));
        break;
      }
    }
  } catch (const FitError&) {
    s.beta.setZero();
    beta_cov.resize(0, 0);
  } catch (const InputError&) {
    s.beta.setZero();
    beta_cov.resize(0, 0);
  }
  if (m.priors.fixed_weibull_shape) s.shape = *m.priors.fixed_weibull_shape;
  const bool cov_ok = beta_cov.rows() == k && beta_cov.allFinite();
  for (Eigen::Index j = 0; j < k; ++j) s.beta(j) += jitter(cov_ok ? std::sqrt(beta_cov(j, j)) : NAN);

  // Proposals.
  s.x_proposal.scale = 1.0;
  const bool transformed = weibull_transformed(m);
  if (cov_ok) {
    s.beta_proposal.covariance = transformed ? MatrixXd(beta_cov / (s.shape * s.shape)) : beta_cov;
  } else {
    const double pv = transformed ? m.priors.weibull_phi_variance
                                  : m.priors.exposure_beta_variance.value_or(m.priors.beta_variance);
    s.beta_proposal.covariance = fallback_covariance(k, pv, m.n);
  }
  s.beta_proposal.scale = scale_for(k);
  s.shape_proposal.scale = std::isfinite(shape_se) && shape_se > 0.0 ? 2.38 * shape_se / s.shape : 0.1;

  // Imputation models.
  for (std::size_t col : m.imputed_columns) {
    const auto q = static_cast<Eigen::Index>(m.predictor_columns.size()) + 1;
    VectorXd alpha = VectorXd::Zero(q);
    MatrixXd cov;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < m.n; ++i)
      if (std::none_of(m.missing_entries.begin(), m.missing_entries.end(),
                       [&](const auto& e) { return e.first == i && e.second == col; }))
        rows.push_back(i);
    try {
      DesignMatrix a{MatrixXd(static_cast<Eigen::Index>(rows.size()), q), {}};
      std::vector<int> target;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        a.x(static_cast<Eigen::Index>(r), 0) = 1.0;
        for (std::size_t j = 0; j < m.predictor_columns.size(); ++j)
          a.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j) + 1) =
              s.z(i, static_cast<Eigen::Index>(m.predictor_columns[j]));
        target.push_back(s.z(i, static_cast<Eigen::Index>(col)) > 0.5 ? 1 : 0);
      }
      for (Eigen::Index j = 0; j < q; ++j) a.names.push_back("alpha" + std::to_string(j));
      const NewtonFit f = fit_logistic_irls(a, target);
      alpha = f.coefficients;
      cov = f.covariance;
    } catch (const FitError&) {
    } catch (const InputError&) {
    }
    ProposalScale prop;
    prop.covariance = cov.rows() == q && cov.allFinite() ? cov : fallback_covariance(q, m.priors.alpha_variance, m.n);
    prop.scale = scale_for(q);
    s.alpha.push_back(alpha);
    s.alpha_proposal.push_back(prop);
  }

  // Baseline hazard from Breslow at the starting coefficients.
  if (m.spec.kind == OutcomeKind::Cox) {
    s.hazard_increments = VectorXd::Zero(static_cast<Eigen::Index>(m.event_times.size()));
    if (m.n > 0) {
      const HazardIncrements h = breslow_increments(m.time, m.event, linear_predictor(m, s, s.beta));
      for (std::size_t j = 0; j < h.increments.size(); ++j)
        s.hazard_increments(static_cast<Eigen::Index>(j)) = std::max(h.increments[j], 1e-12);
    }
    refresh_subject_hazard(m, s);
  }
  return s;
}

}  // namespace mecal
