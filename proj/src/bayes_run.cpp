#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "mecal/bayes_engine.hpp"
#include "mecal/csv.hpp"
#include "mecal/errors.hpp"
#include "mecal/parallel.hpp"
#include "mecal/percentile.hpp"

namespace mecal {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::string> parameter_names(const BayesModel& m) {
  std::vector<std::string> names = m.beta_names();
  if (m.spec.kind == OutcomeKind::Linear) names.push_back("sigma2");
  if (m.spec.kind == OutcomeKind::Weibull) names.push_back("shape");
  names.push_back("gamma0");
  for (const auto& c : m.covariate_names) names.push_back("gamma_" + c);
  names.push_back("sigma2_XgZ");
  names.push_back("sigma2_U");
  if (m.has_shift()) names.push_back("nu");
  for (std::size_t col : m.imputed_columns) {
    const std::string base = "alpha_" + m.covariate_names[col];
    names.push_back(base + "_0");
    for (std::size_t q : m.predictor_columns) names.push_back(base + "_" + m.covariate_names[q]);
  }
  return names;
}

void record(const BayesModel& m, const ChainState& s, std::vector<std::vector<double>>& draws) {
  std::size_t k = 0;
  auto push = [&](double v) { draws[k++].push_back(v); };
  for (Eigen::Index j = 0; j < s.beta.size(); ++j) push(s.beta(j));
  if (m.spec.kind == OutcomeKind::Linear) push(s.sigma2);
  if (m.spec.kind == OutcomeKind::Weibull) push(s.shape);
  for (Eigen::Index j = 0; j < s.gamma.size(); ++j) push(s.gamma(j));
  push(s.sigma2_XgZ);
  push(s.sigma2_U);
  if (m.has_shift()) push(s.nu);
  for (const auto& a : s.alpha)
    for (Eigen::Index j = 0; j < a.size(); ++j) push(a(j));
}

/// Multiplicative scale update toward a target acceptance rate over the last window.
void adapt_scale(ProposalScale& p, long& seen_proposed, long& seen_accepted, double target) {
  const long proposed = p.proposed - seen_proposed;
  const long accepted = p.accepted - seen_accepted;
  seen_proposed = p.proposed;
  seen_accepted = p.accepted;
  if (proposed == 0) return;
  const double rate = static_cast<double>(accepted) / static_cast<double>(proposed);
  p.scale = std::clamp(p.scale * std::exp(2.0 * (rate - target)), 1e-6, 1e6);
}

double block_target(Eigen::Index dim) { return dim > 1 ? 0.23 : 0.44; }

MatrixXd empirical_covariance(const std::vector<VectorXd>& history, std::size_t from) {
  const auto k = history.front().size();
  const auto count = static_cast<double>(history.size() - from);
  VectorXd mean = VectorXd::Zero(k);
  for (std::size_t t = from; t < history.size(); ++t) mean += history[t];
  mean /= count;
  MatrixXd cov = MatrixXd::Zero(k, k);
  for (std::size_t t = from; t < history.size(); ++t) {
    const VectorXd d = history[t] - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= count - 1.0;
  cov.diagonal().array() += 1e-10 * (1.0 + cov.diagonal().maxCoeff());
  return cov;
}

/// One chain's sampler state, stepped through burn-in, the main run and any extensions.
class ChainRunner {
 public:
  ChainRunner(const BayesModel& m, std::uint64_t seed) : m_(m), rng_(seed), s_(initial_state(m, rng_, true)) {}

  void burnin(int iterations, int interval) {
    struct Seen {
      long proposed = 0, accepted = 0;
    };
    Seen x, beta, shape;
    std::vector<Seen> alpha(s_.alpha.size());
    std::vector<VectorXd> beta_hist;
    std::vector<std::vector<VectorXd>> alpha_hist(s_.alpha.size());
    for (int it = 1; it <= iterations; ++it) {
      gibbs_sweep(m_, s_, rng_);
      beta_hist.push_back(outcome_block_coordinates(m_, s_));
      for (std::size_t a = 0; a < s_.alpha.size(); ++a) alpha_hist[a].push_back(s_.alpha[a]);
      if (it % interval != 0) continue;
      adapt_scale(s_.x_proposal, x.proposed, x.accepted, 0.44);
      adapt_scale(s_.shape_proposal, shape.proposed, shape.accepted, 0.44);
      const Eigen::Index kb = s_.beta.size();
      if (beta_hist.size() >= 200 && s_.beta_proposal.proposed > 0) {
        s_.beta_proposal.covariance = empirical_covariance(beta_hist, beta_hist.size() / 2);
      }
      adapt_scale(s_.beta_proposal, beta.proposed, beta.accepted, block_target(kb));
      for (std::size_t a = 0; a < s_.alpha.size(); ++a) {
        if (alpha_hist[a].size() >= 200)
          s_.alpha_proposal[a].covariance = empirical_covariance(alpha_hist[a], alpha_hist[a].size() / 2);
        adapt_scale(s_.alpha_proposal[a], alpha[a].proposed, alpha[a].accepted, block_target(s_.alpha[a].size()));
      }
    }
    reset_counters();
  }

  ChainResult sample(int iterations, const MCMCConfig& cfg) {
    ChainResult r;
    r.names = parameter_names(m_);
    r.draws.assign(r.names.size(), {});
    for (auto& d : r.draws) d.reserve(static_cast<std::size_t>(iterations));
    r.burnin_scales = scales();
    VectorXd hazard_sum = VectorXd::Zero(s_.hazard_increments.size());
    for (int it = 0; it < iterations; ++it) {
      gibbs_sweep(m_, s_, rng_);
      record(m_, s_, r.draws);
      if (hazard_sum.size() > 0) hazard_sum += s_.hazard_increments;
      if (cfg.keep_latent_x && it % cfg.latent_thin == 0)
        r.latent_x.emplace_back(s_.x.data(), s_.x.data() + s_.x.size());
    }
    for (Eigen::Index j = 0; j < hazard_sum.size(); ++j) r.hazard_increment_means.push_back(hazard_sum(j) / iterations);
    r.final_scales = scales();
    auto rate = [&](const char* name, const ProposalScale& p) {
      if (p.proposed > 0) r.acceptance_rates[name] = p.rate();
    };
    rate("x", s_.x_proposal);
    rate("beta", s_.beta_proposal);
    rate("shape", s_.shape_proposal);
    for (std::size_t a = 0; a < s_.alpha.size(); ++a)
      if (s_.alpha_proposal[a].proposed > 0)
        r.acceptance_rates["alpha_" + m_.covariate_names[m_.imputed_columns[a]]] = s_.alpha_proposal[a].rate();
    reset_counters();
    return r;
  }

 private:
  std::map<std::string, double> scales() const {
    std::map<std::string, double> out{{"x", s_.x_proposal.scale},
                                      {"beta", s_.beta_proposal.scale},
                                      {"shape", s_.shape_proposal.scale}};
    for (std::size_t a = 0; a < s_.alpha.size(); ++a)
      out["alpha_" + m_.covariate_names[m_.imputed_columns[a]]] = s_.alpha_proposal[a].scale;
    return out;
  }

  void reset_counters() {
    for (ProposalScale* p : {&s_.x_proposal, &s_.beta_proposal, &s_.shape_proposal}) p->proposed = p->accepted = 0;
    for (auto& p : s_.alpha_proposal) p.proposed = p.accepted = 0;
  }

  const BayesModel& m_;
  Rng rng_;
  ChainState s_;
};

std::vector<std::vector<double>> parameter_chains(const std::vector<ChainResult>& chains, std::size_t k) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) out.push_back(c.draws[k]);
  return out;
}

}  // namespace

double compute_rhat(const std::vector<std::vector<double>>& chains_in, bool split) {
  std::vector<std::vector<double>> chains;
  if (split) {
    for (const auto& c : chains_in) {
      const std::size_t h = c.size() / 2;
      chains.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
      chains.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
    }
  } else {
    chains = chains_in;
  }
  if (chains.size() < 2) throw InputError("Rhat needs at least two chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw InputError("Rhat needs chains of equal length");
  if (n < 2) throw InputError("Rhat needs at least two draws per chain");

  const double nd = static_cast<double>(n);
  const double m = static_cast<double>(chains.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = mean(c);
    means.push_back(mu);
    double ss = 0.0;
    for (double v : c) ss += (v - mu) * (v - mu);
    w += ss / (nd - 1.0);
  }
  w /= m;
  const double grand = mean(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= nd / (m - 1.0);
  if (w == 0.0) return b == 0.0 ? std::sqrt((nd - 1.0) / nd) : std::numeric_limits<double>::infinity();
  return std::sqrt((nd - 1.0) / nd + b / (nd * w));
}

PosteriorSummary posterior_summary(const std::vector<std::vector<double>>& chains, double level) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  if (pooled.empty()) throw InputError("posterior summary of no draws");
  PosteriorSummary s;
  s.mean = mean(pooled);
  s.sd = sample_sd(pooled);
  s.interval = percentile_interval(pooled, level);
  const double width = s.interval.upper - s.interval.lower;
  s.asymmetric = std::abs((s.interval.upper - s.mean) - (s.mean - s.interval.lower)) > 0.1 * width;
  return s;
}

McmcResult run_mcmc(const MEDataset& d, const OutcomeSpec& spec, const PriorConfig& priors, const MCMCConfig& cfg,
                    double level) {
  cfg.validate();
  const BayesModel m = make_bayes_model(d, spec, priors);
  const auto n_chains = static_cast<std::size_t>(cfg.chains);

  std::vector<std::optional<ChainRunner>> runners(n_chains);
  McmcResult r;
  r.chains.resize(n_chains);
  r.iterations_per_chain = cfg.iterations;
  r.latent_thin = cfg.latent_thin;
  parallel_for(n_chains, cfg.threads, [&](std::size_t c) {
    runners[c].emplace(m, derive_seed(cfg.seed, c));
    runners[c]->burnin(cfg.burnin, cfg.adapt_interval);
    r.chains[c] = runners[c]->sample(cfg.iterations, cfg);
  });

  r.monitored = m.beta_names();
  auto assess = [&] {
    r.rhat.clear();
    bool ok = true;
    if (n_chains < 2) return true;
    for (std::size_t k = 0; k < r.monitored.size(); ++k) {
      const double v = compute_rhat(parameter_chains(r.chains, k), cfg.split_rhat);
      r.rhat[r.monitored[k]] = v;
      ok = ok && v <= cfg.rhat_threshold;
    }
    return ok;
  };
  r.converged = assess();
  // Earlier draws become burn-in; each extension doubles the retained run.
  while (!r.converged && r.extensions < cfg.max_extensions) {
    ++r.extensions;
    const int iterations = cfg.iterations << r.extensions;
    parallel_for(n_chains, cfg.threads, [&](std::size_t c) { r.chains[c] = runners[c]->sample(iterations, cfg); });
    r.iterations_per_chain = iterations;
    r.converged = assess();
  }

  const auto& names = r.chains.front().names;
  for (std::size_t k = 0; k < names.size(); ++k) r.summary[names[k]] = posterior_summary(parameter_chains(r.chains, k), level);
  r.event_times = m.event_times;

  FitResult& f = r.fit;
  f.method = Method::Bayes;
  f.level = level;
  f.converged = r.converged;
  auto post = [&](const std::string& name) { return r.summary.at(name).mean; };
  if (m.has_intercept()) f.estimates.beta0 = post("beta0");
  f.estimates.betaX = post("betaX");
  for (const auto& c : m.covariate_names) f.estimates.betaZ.push_back(post("beta_" + c));
  switch (spec.kind) {
    case OutcomeKind::Linear:
      f.estimates.eta = ResidualVariance{post("sigma2")};
      break;
    case OutcomeKind::Weibull:
      f.estimates.eta = WeibullShape{post("shape")};
      break;
    case OutcomeKind::Cox: {
      HazardIncrements h;
      h.event_times = m.event_times;
      h.increments.assign(m.event_times.size(), 0.0);
      for (const auto& c : r.chains)
        for (std::size_t j = 0; j < h.increments.size(); ++j)
          h.increments[j] += c.hazard_increment_means[j] / static_cast<double>(n_chains);
      f.estimates.eta = h;
      break;
    }
    case OutcomeKind::Logistic:
      break;
  }
  MeasurementParams mp;
  mp.gamma0 = post("gamma0");
  for (const auto& c : m.covariate_names) mp.gammaZ.push_back(post("gamma_" + c));
  mp.sigma2_XgZ = post("sigma2_XgZ");
  mp.sigma2_U = post("sigma2_U");
  if (m.has_shift()) mp.nu = post("nu");
  f.estimates.measurement = mp;

  for (const auto& [name, s] : r.summary) f.intervals[name] = s.interval;
  for (const auto& [name, v] : r.rhat) f.diagnostics["rhat_" + name] = v;
  f.diagnostics["converged"] = r.converged ? 1.0 : 0.0;
  f.diagnostics["extensions"] = r.extensions;
  f.diagnostics["chains"] = static_cast<double>(n_chains);
  f.diagnostics["iterations_per_chain"] = r.iterations_per_chain;
  f.diagnostics["burnin"] = cfg.burnin;
  std::map<std::string, double> accept;
  for (const auto& c : r.chains)
    for (const auto& [name, v] : c.acceptance_rates) accept[name] += v / static_cast<double>(n_chains);
  for (const auto& [name, v] : accept) f.diagnostics["accept_" + name] = v;
  return r;
}

void write_draws_csv(std::ostream& out, const McmcResult& r) {
  if (r.chains.empty()) return;
  const auto& names = r.chains.front().names;
  out << "chain,iteration";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t c = 0; c < r.chains.size(); ++c) {
    const auto& ch = r.chains[c];
    const std::size_t t_max = ch.draws.empty() ? 0 : ch.draws.front().size();
    for (std::size_t t = 0; t < t_max; ++t) {
      out << c + 1 << ',' << t + 1;
      for (const auto& d : ch.draws) out << ',' << format_exact(d[t]);
      out << '\n';
    }
  }
}

void write_latent_csv(std::ostream& out, const McmcResult& r) {
  if (r.chains.empty() || r.chains.front().latent_x.empty()) return;
  const std::size_t n = r.chains.front().latent_x.front().size();
  out << "chain,iteration";
  for (std::size_t i = 0; i < n; ++i) out << ",x_" << i + 1;
  out << '\n';
  for (std::size_t c = 0; c < r.chains.size(); ++c)
    for (std::size_t t = 0; t < r.chains[c].latent_x.size(); ++t) {
      out << c + 1 << ',' << t * static_cast<std::size_t>(r.latent_thin) + 1;
      for (double v : r.chains[c].latent_x[t]) out << ',' << format_exact(v);
      out << '\n';
    }
}

}  // namespace mecal
