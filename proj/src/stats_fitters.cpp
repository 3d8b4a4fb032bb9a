#include "mecal/stats_fitters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mecal {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

MatrixXd nan_matrix(Eigen::Index k) {
  return MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
}

/// Inverse of a symmetric positive definite information matrix, NaN-filled when singular.
MatrixXd invert_information(const MatrixXd& info) {
  const Eigen::Index k = info.rows();
  if (k == 0) return MatrixXd(0, 0);
  Eigen::LDLT<MatrixXd> ldlt(info);
  const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * scale)
    return nan_matrix(k);
  MatrixXd cov = ldlt.solve(MatrixXd::Identity(k, k));
  return 0.5 * (cov + cov.transpose());
}

struct Evaluation {
  double loglik = 0.0;
  VectorXd gradient;
  MatrixXd information;  // negative Hessian
};

/// Damped Newton ascent with step halving. `evaluate` returns loglik, gradient
/// and information; `check` may throw (e.g. on separation) after each step.
template <class Evaluate, class Check>
NewtonFit newton_maximize(Evaluate&& evaluate, VectorXd beta, const IterationOptions& opt,
                          const std::string& what, Check&& check) {
  NewtonFit fit;
  Evaluation cur = evaluate(beta, true);
  if (!std::isfinite(cur.loglik)) throw FitError(what + ": log-likelihood not finite at start");
  fit.loglik_trace.push_back(cur.loglik);
  const Eigen::Index k = beta.size();

  for (int iter = 0;; ++iter) {
    if (k == 0 || cur.gradient.cwiseAbs().maxCoeff() < opt.tol) {
      fit.coefficients = beta;
      fit.log_likelihood = cur.loglik;
      fit.iterations = iter;
      fit.covariance = invert_information(cur.information);
      return fit;
    }
    if (iter >= opt.max_iter)
      throw NonConvergenceError(what + ": no convergence after " + std::to_string(opt.max_iter) +
                                    " iterations",
                                to_std(beta));

    // Levenberg damping until the information is positive definite.
    VectorXd step;
    const double diag_scale = std::max(1e-12, cur.information.diagonal().cwiseAbs().maxCoeff());
    for (double mu = 0.0;; mu = (mu == 0.0 ? 1e-8 * diag_scale : mu * 10.0)) {
      MatrixXd h = cur.information;
      h.diagonal().array() += mu;
      Eigen::LDLT<MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
        step = ldlt.solve(cur.gradient);
        if (step.allFinite()) break;
      }
      if (mu > 1e12 * diag_scale)
        throw NonConvergenceError(what + ": information matrix cannot be regularised", to_std(beta));
    }

    // Round-off allowance when the log-likelihood is already flat.
    const double slack = 1e-12 * (1.0 + std::abs(cur.loglik));
    bool accepted = false;
    double t = 1.0;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      VectorXd trial = beta + t * step;
      Evaluation next = evaluate(trial, false);
      if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - slack) {
        beta = trial;
        cur = evaluate(beta, true);
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw NonConvergenceError(what + ": step halving failed to improve the log-likelihood",
                                to_std(beta));
    fit.loglik_trace.push_back(cur.loglik);
    check(beta, cur);
  }
}

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

bool is_intercept_column(const MatrixXd& x, Eigen::Index j) {
  return x.rows() > 0 && (x.col(j).array() == 1.0).all();
}

}  // namespace

DesignMatrix outcome_design(const std::vector<double>& exposure, const MEDataset& d, bool intercept) {
  const std::size_t n = exposure.size();
  const Eigen::Index cols = (intercept ? 1 : 0) + 1 + static_cast<Eigen::Index>(d.p());
  DesignMatrix out{MatrixXd(static_cast<Eigen::Index>(n), cols), {}};
  Eigen::Index j = 0;
  if (intercept) {
    out.x.col(j++).setOnes();
    out.names.push_back("beta0");
  }
  for (std::size_t i = 0; i < n; ++i) out.x(static_cast<Eigen::Index>(i), j) = exposure[i];
  out.names.push_back("betaX");
  ++j;
  for (const auto& c : d.z) {
    for (std::size_t i = 0; i < n; ++i) out.x(static_cast<Eigen::Index>(i), j) = c.values[i];
    out.names.push_back("beta_" + c.name);
    ++j;
  }
  return out;
}

OlsFit fit_ols(const DesignMatrix& design, const VectorXd& y) {
  const MatrixXd& x = design.x;
  const Eigen::Index n = x.rows(), k = x.cols();
  if (n < k) throw InsufficientDataError("OLS needs at least as many rows as columns");
  if (y.size() != n) throw InputError("OLS response length does not match design");

  Eigen::HouseholderQR<MatrixXd> qr(x);
  const MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j) {
    const double norm = x.col(j).norm();
    if (norm == 0.0 || std::abs(r(j, j)) <= 1e-10 * norm)
      throw SingularDesignError(j < static_cast<Eigen::Index>(design.names.size())
                                    ? design.names[j]
                                    : "column " + std::to_string(j));
  }
  OlsFit fit;
  fit.coefficients = qr.solve(y);
  const VectorXd resid = y - x * fit.coefficients;
  fit.residual_variance = n > k ? resid.squaredNorm() / static_cast<double>(n - k) : 0.0;
  const MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(k, k));
  fit.covariance = fit.residual_variance * (rinv * rinv.transpose());
  return fit;
}

NewtonFit fit_logistic_irls(const DesignMatrix& design, const std::vector<int>& y, IterationOptions opt) {
  const MatrixXd& x = design.x;
  const Eigen::Index n = x.rows();
  if (static_cast<Eigen::Index>(y.size()) != n) throw InputError("logistic response length does not match design");
  if (n == 0) throw InsufficientDataError("logistic regression on an empty dataset");
  for (int v : y)
    if (v != 0 && v != 1) throw InputError("logistic response must be 0 or 1");
  const auto ones = std::count(y.begin(), y.end(), 1);
  if (ones == 0 || ones == n)
    throw SeparationError("logistic regression: outcome is constant, estimates diverge");
  VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[i];

  auto evaluate = [&](const VectorXd& beta, bool derivatives) {
    Evaluation e;
    const VectorXd lp = x * beta;
    VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      e.loglik += yv(i) * lp(i) - log1p_exp(lp(i));
      p(i) = 1.0 / (1.0 + std::exp(-lp(i)));
      w(i) = p(i) * (1.0 - p(i));
    }
    if (derivatives) {
      e.gradient = x.transpose() * (yv - p);
      e.information = x.transpose() * w.asDiagonal() * x;
    }
    return e;
  };
  auto check = [&](const VectorXd&, const Evaluation& e) {
    if (e.loglik > -1e-6)
      throw SeparationError("logistic regression: data are perfectly separated, estimates diverge");
  };
  return newton_maximize(evaluate, VectorXd::Zero(x.cols()), opt, "logistic regression", check);
}

namespace {

struct CoxSorted {
  std::vector<Eigen::Index> order;  // by decreasing time
};

CoxSorted sort_by_time_desc(const std::vector<double>& times) {
  CoxSorted s;
  s.order.resize(times.size());
  std::iota(s.order.begin(), s.order.end(), 0);
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return times[a] > times[b]; });
  return s;
}

Evaluation cox_evaluate(const std::vector<double>& times, const std::vector<int>& events,
                        const MatrixXd& x, const VectorXd& beta, const CoxSorted& sorted,
                        bool derivatives) {
  const Eigen::Index n = x.rows(), k = x.cols();
  Evaluation e;
  e.gradient = VectorXd::Zero(k);
  e.information = MatrixXd::Zero(k, k);
  const VectorXd lp = x * beta;
  const double offset = n > 0 ? lp.maxCoeff() : 0.0;

  double s0 = 0.0;
  VectorXd s1 = VectorXd::Zero(k);
  MatrixXd s2 = MatrixXd::Zero(k, k);
  std::size_t pos = 0;
  while (pos < sorted.order.size()) {
    // Add everyone tied at this time to the risk set before scoring events.
    const double t = times[sorted.order[pos]];
    std::size_t end = pos;
    while (end < sorted.order.size() && times[sorted.order[end]] == t) {
      const Eigen::Index i = sorted.order[end];
      const double r = std::exp(lp(i) - offset);
      s0 += r;
      if (derivatives) {
        s1 += r * x.row(i).transpose();
        s2.noalias() += r * x.row(i).transpose() * x.row(i);
      }
      ++end;
    }
    for (std::size_t q = pos; q < end; ++q) {
      const Eigen::Index i = sorted.order[q];
      if (!events[i]) continue;
      e.loglik += lp(i) - offset - std::log(s0);
      if (derivatives) {
        const VectorXd mean = s1 / s0;
        e.gradient += x.row(i).transpose() - mean;
        e.information += s2 / s0 - mean * mean.transpose();
      }
    }
    pos = end;
  }
  return e;
}

}  // namespace

double cox_partial_loglik(const std::vector<double>& times, const std::vector<int>& events,
                          const MatrixXd& x, const VectorXd& beta) {
  return cox_evaluate(times, events, x, beta, sort_by_time_desc(times), false).loglik;
}

NewtonFit fit_cox_partial(const std::vector<double>& times, const std::vector<int>& events,
                          const DesignMatrix& design, IterationOptions opt) {
  const MatrixXd& x = design.x;
  if (times.size() != static_cast<std::size_t>(x.rows()) || events.size() != times.size())
    throw InputError("Cox inputs have inconsistent lengths");
  if (std::none_of(events.begin(), events.end(), [](int d) { return d == 1; }))
    throw InsufficientDataError("Cox regression needs at least one event");
  const CoxSorted sorted = sort_by_time_desc(times);
  auto evaluate = [&](const VectorXd& beta, bool derivatives) {
    return cox_evaluate(times, events, x, beta, sorted, derivatives);
  };
  return newton_maximize(evaluate, VectorXd::Zero(x.cols()), opt, "Cox regression",
                         [](const VectorXd&, const Evaluation&) {});
}

HazardIncrements breslow_increments(const std::vector<double>& times, const std::vector<int>& events,
                                    const VectorXd& linear_predictor) {
  HazardIncrements h;
  const CoxSorted sorted = sort_by_time_desc(times);
  double risk = 0.0;
  std::size_t pos = 0;
  while (pos < sorted.order.size()) {
    const double t = times[sorted.order[pos]];
    std::size_t end = pos;
    int deaths = 0;
    while (end < sorted.order.size() && times[sorted.order[end]] == t) {
      const Eigen::Index i = sorted.order[end];
      risk += std::exp(linear_predictor(i));
      deaths += events[i];
      ++end;
    }
    if (deaths > 0) {
      h.event_times.push_back(t);
      h.increments.push_back(deaths / risk);
    }
    pos = end;
  }
  std::reverse(h.event_times.begin(), h.event_times.end());
  std::reverse(h.increments.begin(), h.increments.end());
  return h;
}

double weibull_loglik(const std::vector<double>& times, const std::vector<int>& events,
                      const MatrixXd& x, const VectorXd& beta, double shape) {
  const VectorXd lp = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double logt = std::log(times[i]);
    if (events[i]) ll += std::log(shape) + (shape - 1.0) * logt + lp(i);
    ll -= std::exp(shape * logt + lp(i));
  }
  return ll;
}

WeibullFit fit_weibull_ml(const std::vector<double>& times, const std::vector<int>& events,
                          const DesignMatrix& design, IterationOptions opt) {
  const MatrixXd& x = design.x;
  const Eigen::Index n = x.rows(), k = x.cols();
  if (times.size() != static_cast<std::size_t>(n) || events.size() != times.size())
    throw InputError("Weibull inputs have inconsistent lengths");
  for (double t : times)
    if (!(t > 0.0)) throw InputError("Weibull regression needs positive times");
  const auto n_events = std::count(events.begin(), events.end(), 1);
  if (n_events == 0) throw InsufficientDataError("Weibull regression needs at least one event");

  std::vector<double> logt(n);
  for (Eigen::Index i = 0; i < n; ++i) logt[i] = std::log(times[i]);

  // Parameters: (beta..., log shape).
  auto evaluate = [&](const VectorXd& theta, bool derivatives) {
    Evaluation e;
    const VectorXd beta = theta.head(k);
    const double r = std::exp(theta(k));
    const VectorXd lp = x * beta;
    if (derivatives) {
      e.gradient = VectorXd::Zero(k + 1);
      e.information = MatrixXd::Zero(k + 1, k + 1);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = events[i];
      const double rl = r * logt[i];
      const double cum = std::exp(rl + lp(i));
      e.loglik += d * (theta(k) + rl - logt[i] + lp(i)) - cum;
      if (!derivatives) continue;
      const auto xi = x.row(i).transpose();
      e.gradient.head(k) += (d - cum) * xi;
      e.gradient(k) += d * (1.0 + rl) - cum * rl;
      e.information.topLeftCorner(k, k).noalias() += cum * xi * xi.transpose();
      e.information.col(k).head(k) += cum * rl * xi;
      e.information(k, k) += cum * rl * rl + cum * rl - d * rl;
    }
    if (derivatives) e.information.row(k).head(k) = e.information.col(k).head(k).transpose();
    return e;
  };

  VectorXd start = VectorXd::Zero(k + 1);
  double total_time = 0.0;
  for (double t : times) total_time += t;
  for (Eigen::Index j = 0; j < k; ++j)
    if (is_intercept_column(x, j)) {
      start(j) = std::log(static_cast<double>(n_events) / total_time);
      break;
    }

  NewtonFit nf = newton_maximize(evaluate, start, opt, "Weibull regression",
                                 [&](const VectorXd& theta, const Evaluation&) {
                                   if (!theta.allFinite() || std::abs(theta(k)) > 20.0)
                                     throw NonConvergenceError("Weibull regression: shape diverges",
                                                               to_std(theta));
                                 });
  WeibullFit fit;
  fit.coefficients = nf.coefficients.head(k);
  fit.shape = std::exp(nf.coefficients(k));
  VectorXd jac = VectorXd::Ones(k + 1);
  jac(k) = fit.shape;
  fit.covariance = jac.asDiagonal() * nf.covariance * jac.asDiagonal();
  fit.log_likelihood = nf.log_likelihood;
  fit.iterations = nf.iterations;
  fit.loglik_trace = std::move(nf.loglik_trace);
  return fit;
}

}  // namespace mecal
