#pragma once

// Independent oracles for the sampler's closed-form full conditionals: the
// unnormalised log joint is written out here from the model definition and
// integrated numerically on a grid.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "mecal/bayes_engine.hpp"

namespace mecal::testing {

inline double normal_logpdf(double v, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (v - mean) * (v - mean) / var;
}

/// Log joint density of data, latent exposures and parameters (up to a constant).
inline double oracle_log_joint(const BayesModel& m, const ChainState& s) {
  const bool icpt = m.spec.kind != OutcomeKind::Cox;
  const Eigen::Index jx = icpt ? 1 : 0;
  const Eigen::Index p = s.z.cols();
  double lj = 0.0;

  std::vector<double> etimes;
  for (std::size_t i = 0; i < m.n; ++i)
    if (m.spec.kind == OutcomeKind::Cox && m.event[i]) etimes.push_back(m.time[i]);
  std::sort(etimes.begin(), etimes.end());
  etimes.erase(std::unique(etimes.begin(), etimes.end()), etimes.end());

  for (std::size_t i = 0; i < m.n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    double lp = (icpt ? s.beta(0) : 0.0) + s.beta(jx) * s.x(r);
    for (Eigen::Index k = 0; k < p; ++k) lp += s.beta(jx + 1 + k) * s.z(r, k);
    switch (m.spec.kind) {
      case OutcomeKind::Linear:
        lj += normal_logpdf(m.y[i], lp, s.sigma2);
        break;
      case OutcomeKind::Logistic: {
        const double pr = 1.0 / (1.0 + std::exp(-lp));
        lj += m.yb[i] ? std::log(pr) : std::log(1.0 - pr);
        break;
      }
      case OutcomeKind::Cox: {
        double h = 0.0;
        for (std::size_t j = 0; j < etimes.size(); ++j) {
          if (etimes[j] <= m.time[i]) h += s.hazard_increments(static_cast<Eigen::Index>(j));
          if (m.event[i] && etimes[j] == m.time[i])
            lj += lp + std::log(s.hazard_increments(static_cast<Eigen::Index>(j)));
        }
        lj -= std::exp(lp) * h;
        break;
      }
      case OutcomeKind::Weibull: {
        const double t = m.time[i], rr = s.shape;
        if (m.event[i]) lj += std::log(rr) + (rr - 1.0) * std::log(t) + lp;
        lj -= std::pow(t, rr) * std::exp(lp);
        break;
      }
    }
    const double nu = m.spec.exam_shift ? s.nu : 0.0;
    if (m.w1[i]) lj += normal_logpdf(*m.w1[i], s.x(r), s.sigma2_U);
    if (m.w2[i]) lj += normal_logpdf(*m.w2[i], s.x(r) + nu, s.sigma2_U);
    double mu = s.gamma(0);
    for (Eigen::Index k = 0; k < p; ++k) mu += s.gamma(k + 1) * s.z(r, k);
    lj += normal_logpdf(s.x(r), mu, s.sigma2_XgZ);
  }

  const auto& pr = m.priors;
  for (Eigen::Index j = 0; j < s.beta.size(); ++j) {
    const double v = (icpt && j == 0) ? pr.beta_variance : pr.exposure_beta_variance.value_or(pr.beta_variance);
    lj += normal_logpdf(s.beta(j), 0.0, v);
  }
  for (Eigen::Index j = 0; j < s.gamma.size(); ++j) lj += normal_logpdf(s.gamma(j), 0.0, pr.gamma_variance);
  auto precision_prior = [&](double variance) {
    const double tau = 1.0 / variance;
    return (pr.precision_shape - 1.0) * std::log(tau) - pr.precision_rate * tau;
  };
  if (m.spec.kind == OutcomeKind::Linear) lj += precision_prior(s.sigma2);
  lj += precision_prior(s.sigma2_XgZ) + precision_prior(s.sigma2_U);
  if (m.spec.exam_shift) lj += normal_logpdf(s.nu, 0.0, pr.nu_variance);
  if (m.spec.kind == OutcomeKind::Cox) {
    double prev = 0.0;
    for (std::size_t j = 0; j < etimes.size(); ++j) {
      const double a = pr.gp_c * pr.gp_rate * (etimes[j] - prev);
      const double h = s.hazard_increments(static_cast<Eigen::Index>(j));
      lj += (a - 1.0) * std::log(h) - pr.gp_c * h;
      prev = etimes[j];
    }
  }
  // Logistic models for incompletely observed binary covariates.
  for (std::size_t a = 0; a < s.alpha.size(); ++a) {
    const auto col = static_cast<Eigen::Index>(m.imputed_columns[a]);
    for (std::size_t i = 0; i < m.n; ++i) {
      double eta = s.alpha[a](0);
      for (std::size_t q = 0; q < m.predictor_columns.size(); ++q)
        eta += s.alpha[a](static_cast<Eigen::Index>(q) + 1) *
               s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m.predictor_columns[q]));
      const double pz = 1.0 / (1.0 + std::exp(-eta));
      lj += s.z(static_cast<Eigen::Index>(i), col) > 0.5 ? std::log(pz) : std::log(1.0 - pz);
    }
    for (Eigen::Index j = 0; j < s.alpha[a].size(); ++j) lj += normal_logpdf(s.alpha[a](j), 0.0, pr.alpha_variance);
  }
  return lj;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and SD of exp(f) on [lo, hi] by trapezoidal quadrature, refined once
/// onto the region holding essentially all the mass.
inline Moments quadrature_moments(const std::function<double(double)>& f, double lo, double hi) {
  for (int pass = 0; pass < 2; ++pass) {
    const int n = pass == 0 ? 4001 : 40001;
    const double h = (hi - lo) / (n - 1);
    std::vector<double> t(n), lf(n);
    double best = -INFINITY;
    for (int k = 0; k < n; ++k) {
      t[k] = lo + k * h;
      lf[k] = f(t[k]);
      best = std::max(best, lf[k]);
    }
    if (pass == 0) {
      int first = n - 1, last = 0;
      for (int k = 0; k < n; ++k)
        if (lf[k] > best - 50.0) first = std::min(first, k), last = std::max(last, k);
      const double new_lo = t[std::max(first - 1, 0)], new_hi = t[std::min(last + 1, n - 1)];
      lo = new_lo;
      hi = new_hi;
      continue;
    }
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double w = std::exp(lf[k] - best) * ((k == 0 || k == n - 1) ? 0.5 : 1.0);
      z += w;
      m1 += w * t[k];
      m2 += w * t[k] * t[k];
    }
    const double mean = m1 / z;
    return {mean, std::sqrt(std::max(m2 / z - mean * mean, 0.0))};
  }
  return {};
}

/// Marginal moments of both coordinates of exp(f(a, b)) on a rectangle, refined once.
inline std::pair<Moments, Moments> quadrature_moments_2d(const std::function<double(double, double)>& f,
                                                          double alo, double ahi, double blo, double bhi) {
  for (int pass = 0; pass < 2; ++pass) {
    const int n = pass == 0 ? 201 : 801;
    const double ha = (ahi - alo) / (n - 1), hb = (bhi - blo) / (n - 1);
    std::vector<double> lf(static_cast<std::size_t>(n) * n);
    double best = -INFINITY;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double v = f(alo + i * ha, blo + j * hb);
        lf[static_cast<std::size_t>(i) * n + j] = v;
        best = std::max(best, v);
      }
    if (pass == 0) {
      int ia = n, ib = 0, ja = n, jb = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (lf[static_cast<std::size_t>(i) * n + j] > best - 50.0)
            ia = std::min(ia, i), ib = std::max(ib, i), ja = std::min(ja, j), jb = std::max(jb, j);
      const double nalo = alo + std::max(ia - 1, 0) * ha, nahi = alo + std::min(ib + 1, n - 1) * ha;
      const double nblo = blo + std::max(ja - 1, 0) * hb, nbhi = blo + std::min(jb + 1, n - 1) * hb;
      alo = nalo, ahi = nahi, blo = nblo, bhi = nbhi;
      continue;
    }
    double z = 0.0, a1 = 0.0, a2 = 0.0, b1 = 0.0, b2 = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double wa = (i == 0 || i == n - 1) ? 0.5 : 1.0, wb = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        const double w = std::exp(lf[static_cast<std::size_t>(i) * n + j] - best) * wa * wb;
        const double a = alo + i * ha, b = blo + j * hb;
        z += w, a1 += w * a, a2 += w * a * a, b1 += w * b, b2 += w * b * b;
      }
    const double ma = a1 / z, mb = b1 / z;
    return {{ma, std::sqrt(a2 / z - ma * ma)}, {mb, std::sqrt(b2 / z - mb * mb)}};
  }
  return {};
}

struct OracleCheck {
  std::string name;
  Moments closed_form;
  Moments oracle;
  bool pass = false;
};

/// Agreement to 1%: means within 1% of max(|mean|, sd), SDs within 1%.
inline bool within_one_percent(const Moments& a, const Moments& b) {
  const double scale = std::max(std::abs(b.mean), b.sd);
  return std::abs(a.mean - b.mean) <= 0.01 * scale && std::abs(a.sd - b.sd) <= 0.01 * b.sd;
}

inline OracleCheck make_check(std::string name, Moments closed, Moments oracle) {
  return {std::move(name), closed, oracle, within_one_percent(closed, oracle)};
}

inline Moments normal_moments(const NormalConditional& c) { return {c.mean, std::sqrt(c.variance)}; }
inline Moments gamma_moments(const GammaConditional& g) { return {g.shape / g.rate, std::sqrt(g.shape) / g.rate}; }

/// Six-row linear fixture with an exam shift; one individual in three replicated.
inline std::pair<BayesModel, ChainState> linear_oracle_fixture() {
  MEDataset d;
  d.outcome = ContinuousOutcome{{1.2, -0.3, 2.5, 0.7, 1.9, -1.1}};
  d.w = {{1.0, 1.3}, {-0.5, std::nullopt}, {2.2, 2.9}, {0.1, std::nullopt}, {1.4, std::nullopt}, {-0.9, -0.2}};
  OutcomeSpec spec{OutcomeKind::Linear, true};
  BayesModel m = make_bayes_model(d, spec, PriorConfig{});
  Rng rng(1);
  ChainState s = initial_state(m, rng, false);
  s.x = Eigen::VectorXd::Map(std::vector<double>{0.9, -0.4, 2.0, 0.3, 1.5, -0.8}.data(), 6);
  s.beta = Eigen::Vector2d(0.2, 0.8);
  s.sigma2 = 0.6;
  s.gamma = Eigen::VectorXd::Constant(1, 0.3);
  s.sigma2_XgZ = 1.1;
  s.sigma2_U = 0.4;
  s.nu = 0.35;
  return {m, s};
}

/// Five subjects, three distinct event times, one tie between an event and a censoring.
inline std::pair<BayesModel, ChainState> cox_oracle_fixture(double c, double beta_x = 0.4) {
  MEDataset d;
  d.outcome = SurvivalOutcome{{1.0, 2.0, 2.0, 4.0, 5.0}, {1, 1, 0, 1, 0}};
  d.w = {{0.6, std::nullopt}, {-0.1, std::nullopt}, {0.8, 1.1}, {0.2, std::nullopt}, {-0.5, -0.9}};
  PriorConfig pr;
  pr.gp_c = c;
  pr.gp_rate = 0.01;
  BayesModel m = make_bayes_model(d, {OutcomeKind::Cox, false}, pr);
  Rng rng(1);
  ChainState s = initial_state(m, rng, false);
  s.x = Eigen::VectorXd::Map(std::vector<double>{0.5, -0.2, 1.0, 0.3, -0.7}.data(), 5);
  s.beta = Eigen::VectorXd::Constant(1, beta_x);
  s.hazard_increments = Eigen::Vector3d(0.15, 0.25, 0.5);
  refresh_subject_hazard(m, s);
  return {m, s};
}

/// Six-row logistic fixture with a binary covariate missing in rows 2 and 5.
inline std::pair<BayesModel, ChainState> binary_oracle_fixture() {
  MEDataset d;
  d.outcome = BinaryOutcome{{1, 0, 1, 0, 0, 1}};
  d.w = {{0.4, std::nullopt}, {-0.6, std::nullopt}, {1.1, 0.9}, {0.0, std::nullopt}, {-1.2, std::nullopt}, {0.7, std::nullopt}};
  Covariate z1;
  z1.name = "age";
  z1.values = {0.3, -1.0, 0.8, 1.5, -0.2, 0.1};
  z1.present.assign(6, 1);
  Covariate zb;
  zb.name = "smoker";
  zb.values = {1, 0, 1, 0, 0, 0};
  zb.present = {1, 0, 1, 1, 0, 1};
  zb.binary_with_missing = true;
  d.z = {z1, zb};
  BayesModel m = make_bayes_model(d, {OutcomeKind::Logistic, false}, PriorConfig{});
  Rng rng(1);
  ChainState s = initial_state(m, rng, false);
  s.x = Eigen::VectorXd::Map(std::vector<double>{0.5, -0.4, 1.0, 0.2, -1.0, 0.6}.data(), 6);
  s.beta = Eigen::Vector4d(-0.5, 0.7, 0.2, 1.1);
  s.gamma = Eigen::Vector3d(0.1, 0.3, -0.4);
  s.sigma2_XgZ = 0.9;
  s.sigma2_U = 0.5;
  s.alpha = {Eigen::Vector2d(-0.3, 0.8)};
  return {m, s};
}

/// Every closed-form full conditional against its grid oracle.
inline std::vector<OracleCheck> conjugate_oracle_suite() {
  std::vector<OracleCheck> out;
  {
    auto [m, s] = linear_oracle_fixture();
    for (std::size_t i : {std::size_t{1}, std::size_t{2}}) {
      ChainState t = s;
      const auto r = static_cast<Eigen::Index>(i);
      const Moments q = quadrature_moments([&](double v) { t.x(r) = v; return oracle_log_joint(m, t); }, -20, 20);
      out.push_back(make_check("latent x (" + std::to_string(m.n_meas[i]) + " measurements)",
                               normal_moments(latent_x_conditional_linear(m, s, i)), q));
    }
    {
      ChainState t = s;
      const auto [qa, qb] = quadrature_moments_2d(
          [&](double a, double b) { t.beta = Eigen::Vector2d(a, b); return oracle_log_joint(m, t); }, -20, 20, -20, 20);
      const auto [mean, cov] = beta_conditional_linear(m, s);
      out.push_back(make_check("beta0", {mean(0), std::sqrt(cov(0, 0))}, qa));
      out.push_back(make_check("betaX", {mean(1), std::sqrt(cov(1, 1))}, qb));
    }
    {
      ChainState t = s;
      const auto [mean, cov] = gamma_conditional(m, s);
      const Moments q = quadrature_moments([&](double v) { t.gamma(0) = v; return oracle_log_joint(m, t); }, -20, 20);
      out.push_back(make_check("gamma0", {mean(0), std::sqrt(cov(0, 0))}, q));
    }
    auto precision_check = [&](const char* name, double ChainState::*field, GammaConditional closed) {
      ChainState t = s;
      const Moments q = quadrature_moments([&](double tau) { t.*field = 1.0 / tau; return oracle_log_joint(m, t); },
                                           1e-6, 60.0);
      out.push_back(make_check(name, gamma_moments(closed), q));
    };
    precision_check("residual precision", &ChainState::sigma2, residual_precision_conditional(m, s));
    precision_check("exposure precision", &ChainState::sigma2_XgZ, exposure_precision_conditional(m, s));
    precision_check("error precision", &ChainState::sigma2_U, error_precision_conditional(m, s));
    {
      ChainState t = s;
      const Moments q = quadrature_moments([&](double v) { t.nu = v; return oracle_log_joint(m, t); }, -20, 20);
      out.push_back(make_check("shift nu", normal_moments(shift_conditional(m, s)), q));
    }
  }
  {
    auto [m, s] = cox_oracle_fixture(0.5);
    for (std::size_t j = 0; j < 3; ++j) {
      ChainState t = s;
      const auto r = static_cast<Eigen::Index>(j);
      const Moments q =
          quadrature_moments([&](double v) { t.hazard_increments(r) = v; return oracle_log_joint(m, t); }, 1e-9, 30.0);
      out.push_back(make_check("hazard increment " + std::to_string(j + 1),
                               gamma_moments(hazard_increment_conditional(m, s, j)), q));
    }
  }
  {
    auto [m, s] = binary_oracle_fixture();
    for (std::size_t e = 0; e < m.missing_entries.size(); ++e) {
      const auto [i, col] = m.missing_entries[e];
      ChainState t = s;
      double l[2];
      for (int v = 0; v < 2; ++v) {
        t.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = v;
        l[v] = oracle_log_joint(m, t);
      }
      const double p1 = 1.0 / (1.0 + std::exp(l[0] - l[1]));
      const double closed = binary_imputation_probability(m, s, e);
      out.push_back(make_check("binary imputation row " + std::to_string(i + 1),
                               {closed, std::sqrt(closed * (1 - closed))}, {p1, std::sqrt(p1 * (1 - p1))}));
    }
  }
  return out;
}

}  // namespace mecal::testing
