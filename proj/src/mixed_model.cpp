// Random-intercepts measurement model fitted by maximum likelihood.
//
// For an individual with both measurements the pair (W1, W2) is rotated into
// the mean A = (W1 + W2) / 2 and the difference D = W2 - W1, which are
// independent with
//   A ~ N(mu_i + nu / 2, s2x + s2u / 2),   D ~ N(nu, 2 s2u),
// and the transform has unit Jacobian. Single measurements have variance
// s2x + s2u. Given the two variances the fixed effects follow by weighted
// least squares, so the optimiser only searches over (s2x, s2u).

#include <cmath>
#include <limits>
#include <numbers>

#include <gsl/gsl_multimin.h>

#include "mecal/stats_fitters.hpp"

namespace mecal {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class RowKind { Mean, Single };

struct MeasurementRows {
  // Rows of the location model: response, covariate design (1, Z), the
  // coefficient on nu, and which variance applies.
  std::vector<double> response;
  MatrixXd design;
  std::vector<double> nu_coef;
  std::vector<RowKind> kind;
  std::vector<double> differences;  // W2 - W1 for complete pairs
  bool include_shift = false;
  Eigen::Index q = 0;  // columns of design
};

MeasurementRows prepare(const MEDataset& d, bool include_shift) {
  MeasurementRows m;
  m.include_shift = include_shift;
  m.q = 1 + static_cast<Eigen::Index>(d.p());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.n(); ++i) {
    if (d.w[i].count() == 0) continue;
    for (const auto& c : d.z)
      if (!c.observed(i))
        throw InputError("mixed model: covariate '" + c.name + "' is missing at row " + std::to_string(i));
    rows.push_back(i);
  }
  m.design.resize(static_cast<Eigen::Index>(rows.size()), m.q);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    const auto& w = d.w[i];
    const auto row = static_cast<Eigen::Index>(r);
    m.design(row, 0) = 1.0;
    for (std::size_t k = 0; k < d.p(); ++k) m.design(row, static_cast<Eigen::Index>(k) + 1) = d.z[k].values[i];
    if (w.w1 && w.w2) {
      m.response.push_back(0.5 * (*w.w1 + *w.w2));
      m.nu_coef.push_back(0.5);
      m.kind.push_back(RowKind::Mean);
      m.differences.push_back(*w.w2 - *w.w1);
    } else {
      m.response.push_back(w.w1 ? *w.w1 : *w.w2);
      m.nu_coef.push_back(w.w1 ? 0.0 : 1.0);
      m.kind.push_back(RowKind::Single);
    }
  }
  return m;
}

struct Location {
  VectorXd gamma;
  double nu = 0.0;
};

/// Weighted least squares for (gamma, nu) given the variances. When s2u == 0
/// nu is pinned to the mean difference.
Location solve_location(const MeasurementRows& m, double s2x, double s2u) {
  const Eigen::Index rows = m.design.rows();
  const Eigen::Index cols = m.q + (m.include_shift ? 1 : 0);
  const double v_mean = s2x + s2u / 2.0;
  const double v_single = s2x + s2u;
  const std::size_t n_pairs = m.differences.size();

  const bool pinned_nu = m.include_shift && s2u == 0.0;
  double nu_fixed = 0.0;
  if (pinned_nu) {
    for (double dv : m.differences) nu_fixed += dv;
    nu_fixed /= static_cast<double>(n_pairs);
  }

  const Eigen::Index free_cols = pinned_nu ? m.q : cols;
  MatrixXd a = MatrixXd::Zero(free_cols, free_cols);
  VectorXd b = VectorXd::Zero(free_cols);
  VectorXd row(free_cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double v = m.kind[r] == RowKind::Mean ? v_mean : v_single;
    const double wgt = v > 0.0 ? 1.0 / v : 1.0;
    row.head(m.q) = m.design.row(r).transpose();
    double y = m.response[r];
    if (m.include_shift) {
      if (pinned_nu)
        y -= m.nu_coef[r] * nu_fixed;
      else
        row(m.q) = m.nu_coef[r];
    }
    a.noalias() += wgt * row * row.transpose();
    b += wgt * y * row;
  }
  if (m.include_shift && !pinned_nu) {
    // Differences inform nu only: D ~ N(nu, 2 s2u).
    const double wgt = 1.0 / (2.0 * s2u);
    a(m.q, m.q) += wgt * static_cast<double>(n_pairs);
    for (double dv : m.differences) b(m.q) += wgt * dv;
  }
  Eigen::LDLT<MatrixXd> ldlt(a);
  VectorXd sol = ldlt.solve(b);
  Location loc;
  loc.gamma = sol.head(m.q);
  loc.nu = m.include_shift ? (pinned_nu ? nu_fixed : sol(m.q)) : 0.0;
  return loc;
}

double log_normal_density(double resid, double var) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + resid * resid / var);
}

/// Log-likelihood; with s2u == 0 the (degenerate) difference terms are dropped.
double loglik_at(const MeasurementRows& m, const Location& loc, double s2x, double s2u) {
  const double v_mean = s2x + s2u / 2.0;
  const double v_single = s2x + s2u;
  if (!(v_mean > 0.0) || !(v_single > 0.0)) return -std::numeric_limits<double>::infinity();
  double ll = 0.0;
  const VectorXd mu = m.design * loc.gamma;
  for (Eigen::Index r = 0; r < m.design.rows(); ++r) {
    const double resid = m.response[r] - mu(r) - m.nu_coef[r] * loc.nu;
    ll += log_normal_density(resid, m.kind[r] == RowKind::Mean ? v_mean : v_single);
  }
  if (s2u > 0.0)
    for (double dv : m.differences) ll += log_normal_density(dv - loc.nu, 2.0 * s2u);
  return ll;
}

struct ProfileContext {
  const MeasurementRows* rows;
};

double negative_profile(const gsl_vector* s, void* params) {
  const auto* ctx = static_cast<const ProfileContext*>(params);
  const double s2x = gsl_vector_get(s, 0) * gsl_vector_get(s, 0);
  const double s2u = gsl_vector_get(s, 1) * gsl_vector_get(s, 1);
  if (!(s2u > 0.0)) return std::numeric_limits<double>::max();
  const Location loc = solve_location(*ctx->rows, s2x, s2u);
  const double ll = loglik_at(*ctx->rows, loc, s2x, s2u);
  return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
}

/// Nelder-Mead over the signed square roots of the two variances.
std::pair<double, double> nelder_mead(const MeasurementRows& m, double sx0, double su0) {
  ProfileContext ctx{&m};
  gsl_multimin_function fn{&negative_profile, 2, &ctx};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector* step = gsl_vector_alloc(2);
  gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  double sx = sx0, su = su0;
  // A restart from the previous optimum guards against simplex collapse.
  for (int round = 0; round < 3; ++round) {
    gsl_vector_set(x, 0, sx);
    gsl_vector_set(x, 1, su);
    gsl_vector_set(step, 0, std::max(0.1 * std::abs(sx), 1e-3));
    gsl_vector_set(step, 1, std::max(0.1 * std::abs(su), 1e-3));
    gsl_multimin_fminimizer_set(solver, &fn, x, step);
    for (int iter = 0; iter < 5000; ++iter) {
      if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
      const double size = gsl_multimin_fminimizer_size(solver);
      if (gsl_multimin_test_size(size, 1e-12) == GSL_SUCCESS) break;
    }
    sx = gsl_vector_get(solver->x, 0);
    su = gsl_vector_get(solver->x, 1);
  }
  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return {sx * sx, su * su};
}

MixedModelFit package(const MeasurementRows& m, const Location& loc, double s2x, double s2u) {
  MixedModelFit fit;
  fit.gamma0 = loc.gamma(0);
  for (Eigen::Index k = 1; k < loc.gamma.size(); ++k) fit.gammaZ.push_back(loc.gamma(k));
  fit.sigma2_XgZ = s2x;
  fit.sigma2_U = s2u;
  if (m.include_shift) fit.nu = loc.nu;
  fit.log_likelihood = loglik_at(m, loc, s2x, s2u);
  return fit;
}

}  // namespace

MixedModelFit fit_mixed_model_ml(const MEDataset& d, bool include_shift) {
  const MeasurementRows m = prepare(d, include_shift);
  const std::size_t n_pairs = m.differences.size();
  if (n_pairs == 0)
    throw InsufficientDataError("mixed model: no individual has two measurements, error variance is unidentifiable");
  if (m.design.rows() <= m.q)
    throw InsufficientDataError("mixed model: too few measured individuals for the covariate model");

  // Method-of-moments start.
  double mean_d = 0.0;
  if (include_shift) {
    for (double dv : m.differences) mean_d += dv;
    mean_d /= static_cast<double>(n_pairs);
  }
  double within_ss = 0.0;
  for (double dv : m.differences) within_ss += (dv - mean_d) * (dv - mean_d);

  double response_var = 0.0, response_mean = 0.0;
  for (double y : m.response) response_mean += y;
  response_mean /= static_cast<double>(m.response.size());
  for (double y : m.response) response_var += (y - response_mean) * (y - response_mean);
  response_var /= static_cast<double>(m.response.size());
  const double scale = std::max(response_var, 1e-300);

  if (within_ss <= 1e-28 * std::max(1.0, scale) * static_cast<double>(n_pairs)) {
    // Replicates agree exactly: no measurement error.
    const Location loc = solve_location(m, 1.0, 0.0);
    const VectorXd mu = m.design * loc.gamma;
    double rss = 0.0;
    for (Eigen::Index r = 0; r < m.design.rows(); ++r) {
      const double resid = m.response[r] - mu(r) - m.nu_coef[r] * loc.nu;
      rss += resid * resid;
    }
    const double s2x = rss / static_cast<double>(m.design.rows());
    MixedModelFit fit = package(m, loc, s2x, 0.0);
    fit.sigma2_U_at_boundary = true;
    fit.sigma2_XgZ_at_boundary = s2x == 0.0;
    return fit;
  }

  const double dof = static_cast<double>(n_pairs) - (include_shift ? 1.0 : 0.0);
  const double s2u_mm = std::max(within_ss / (2.0 * std::max(dof, 1.0)), 1e-8 * scale);
  const Location loc_mm = solve_location(m, scale, s2u_mm);
  double resid_var = 0.0;
  {
    const VectorXd mu = m.design * loc_mm.gamma;
    for (Eigen::Index r = 0; r < m.design.rows(); ++r) {
      const double resid = m.response[r] - mu(r) - m.nu_coef[r] * loc_mm.nu;
      resid_var += resid * resid;
    }
    resid_var /= static_cast<double>(m.design.rows());
  }
  const double s2x_mm = std::max(resid_var - s2u_mm, 0.1 * resid_var);

  auto [s2x, s2u] = nelder_mead(m, std::sqrt(s2x_mm), std::sqrt(s2u_mm));

  MixedModelFit fit;
  bool x_boundary = false;
  if (s2x < 1e-10 * scale) {
    s2x = 0.0;
    x_boundary = true;
  }
  const Location loc = solve_location(m, s2x, s2u);
  fit = package(m, loc, s2x, s2u);
  fit.sigma2_XgZ_at_boundary = x_boundary;
  return fit;
}

double mixed_model_loglik(const MEDataset& d, const MixedModelFit& params) {
  const MeasurementRows m = prepare(d, params.nu.has_value());
  Location loc;
  loc.gamma.resize(m.q);
  loc.gamma(0) = params.gamma0;
  for (Eigen::Index k = 1; k < m.q; ++k) loc.gamma(k) = params.gammaZ.at(static_cast<std::size_t>(k - 1));
  loc.nu = params.nu.value_or(0.0);
  return loglik_at(m, loc, params.sigma2_XgZ, params.sigma2_U);
}

}  // namespace mecal
