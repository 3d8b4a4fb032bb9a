#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bayes_oracles.hpp"
#include "fixtures.hpp"
#include "mecal/bayes_engine.hpp"
#include "mecal/percentile.hpp"
#include "mecal/regression_calibration.hpp"

using namespace mecal;
using namespace mecal::testing;

namespace {

/// Standard error of the mean of an autocorrelated series by batch means.
double batch_mean_se(const std::vector<double>& v, int batches = 50) {
  const std::size_t size = v.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t t = 0; t < size; ++t) s += v[static_cast<std::size_t>(b) * size + t];
    means.push_back(s / static_cast<double>(size));
  }
  return sample_sd(means) / std::sqrt(static_cast<double>(batches));
}

std::vector<double> pooled(const McmcResult& r, const std::string& name) {
  std::vector<double> out;
  const auto& names = r.chains.front().names;
  const auto k = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
  REQUIRE(k < names.size());
  for (const auto& c : r.chains) out.insert(out.end(), c.draws[k].begin(), c.draws[k].end());
  return out;
}

std::vector<double> chain_draws(const McmcResult& r, std::size_t chain, const std::string& name) {
  const auto& names = r.chains[chain].names;
  const auto k = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
  return r.chains[chain].draws[k];
}

MCMCConfig small_config(int chains, int burnin, int iterations, std::uint64_t seed = 11) {
  MCMCConfig c;
  c.chains = chains;
  c.burnin = burnin;
  c.iterations = iterations;
  c.max_extensions = 0;
  c.seed = seed;
  return c;
}

MEDataset empty_dataset(OutcomeKind kind) {
  MEDataset d;
  switch (kind) {
    case OutcomeKind::Linear: d.outcome = ContinuousOutcome{}; break;
    case OutcomeKind::Logistic: d.outcome = BinaryOutcome{}; break;
    default: d.outcome = SurvivalOutcome{}; break;
  }
  return d;
}

}  // namespace

// Rhat and summaries

TEST_CASE("Rhat: identical chains give sqrt((n-1)/n)") {
  std::vector<double> c;
  for (int t = 0; t < 100; ++t) c.push_back(std::sin(t * 0.37));
  CHECK(compute_rhat({c, c, c}) == doctest::Approx(std::sqrt(99.0 / 100.0)).epsilon(1e-12));
}

TEST_CASE("Rhat: two constant chains far apart are flagged") {
  const std::vector<double> a(100, 0.0), b(100, 10.0);
  CHECK(compute_rhat({a, b}) > 10.0);
}

TEST_CASE("Rhat: hand computation on two five-draw chains") {
  // Means 3 and 8, within variance 2.5, B = 5 * (2.5^2 * 2) / 1 = 62.5.
  CHECK(compute_rhat({{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}}) == doctest::Approx(std::sqrt(0.8 + 62.5 / 12.5)).epsilon(1e-12));
  CHECK(compute_rhat({{1, 2, 3, 4, 5}, {2, 3, 4, 5, 6}}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Rhat: a single chain is an error") {
  CHECK_THROWS_AS(compute_rhat({{1, 2, 3}}), InputError);
}

TEST_CASE("Rhat: split halves expose drift inside one chain") {
  std::vector<double> a, b;
  for (int t = 0; t < 200; ++t) {
    a.push_back(t < 100 ? 0.0 + 0.01 * std::sin(t) : 5.0 + 0.01 * std::cos(t));
    b.push_back(t < 100 ? 0.0 + 0.01 * std::cos(t) : 5.0 + 0.01 * std::sin(t));
  }
  CHECK(compute_rhat({a, b}) < 1.01);
  CHECK(compute_rhat({a, b}, true) > 10.0);
}

TEST_CASE("posterior summary of 1..100") {
  std::vector<double> v;
  for (int k = 1; k <= 100; ++k) v.push_back(k);
  const auto s = posterior_summary({v});
  CHECK(s.mean == 50.5);
  CHECK(s.interval.lower == 3.0);
  CHECK(s.interval.upper == 98.0);
  CHECK_FALSE(s.asymmetric);
}

TEST_CASE("posterior summary pools chains and matches a sort oracle") {
  std::mt19937_64 gen(3);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<std::vector<double>> chains(3);
  std::vector<double> all;
  for (auto& c : chains)
    for (int t = 0; t < 700; ++t) {
      c.push_back(g(gen));
      all.push_back(c.back());
    }
  const auto s = posterior_summary(chains, 0.9);
  std::sort(all.begin(), all.end());
  // a = 0.05: ceil(105) = 105th and ceil(1995) = 1995th of 2100.
  CHECK(s.interval.lower == all[104]);
  CHECK(s.interval.upper == all[1994]);
  CHECK(s.interval.lower < s.mean);
  CHECK(s.mean < s.interval.upper);
  CHECK(s.asymmetric);  // right-skewed gamma draws
}

TEST_CASE("credible intervals contain the mean for unimodal draws") {
  std::mt19937_64 gen(5);
  for (double shape : {0.8, 2.0, 20.0}) {
    std::gamma_distribution<double> g(shape, 1.0);
    std::vector<double> v(4000);
    for (auto& x : v) x = g(gen);
    const auto s = posterior_summary({v});
    CHECK(s.interval.lower <= s.mean);
    CHECK(s.mean <= s.interval.upper);
  }
}

// Closed-form conditionals

TEST_CASE("closed-form full conditionals match grid quadrature to 1%") {
  for (const auto& c : conjugate_oracle_suite()) {
    INFO(c.name, ": closed ", c.closed_form.mean, " / ", c.closed_form.sd, "  oracle ", c.oracle.mean, " / ",
         c.oracle.sd);
    CHECK(c.pass);
  }
}

TEST_CASE("linear latent X draws follow the closed-form conditional") {
  auto [m, s] = linear_oracle_fixture();
  const auto target = latent_x_conditional_linear(m, s, 2);
  Rng rng(9);
  std::vector<double> draws;
  for (int t = 0; t < 40000; ++t) {
    ChainState u = s;
    update_latent_x(m, u, rng);
    draws.push_back(u.x(2));
  }
  CHECK(std::abs(mean(draws) - target.mean) < 4.0 * std::sqrt(target.variance / 40000.0));
  CHECK(sample_sd(draws) == doctest::Approx(std::sqrt(target.variance)).epsilon(0.02));
}

TEST_CASE("MH latent X for a logistic outcome targets the quadrature conditional") {
  auto [m, s] = binary_oracle_fixture();
  const std::size_t i = 2;
  const auto r = static_cast<Eigen::Index>(i);
  ChainState t = s;
  const Moments q = quadrature_moments([&](double v) { t.x(r) = v; return oracle_log_joint(m, t); }, -20, 20);
  Rng rng(21);
  ChainState u = s;
  std::vector<double> draws;
  for (int k = 0; k < 2000; ++k) update_latent_x(m, u, rng);
  for (int k = 0; k < 100000; ++k) {
    update_latent_x(m, u, rng);
    draws.push_back(u.x(r));
  }
  CHECK(std::abs(mean(draws) - q.mean) < 4.0 * batch_mean_se(draws));
  CHECK(sample_sd(draws) == doctest::Approx(q.sd).epsilon(0.03));
}

TEST_CASE("binary imputation: both states normalise and zero effects leave the logistic prior") {
  auto [m, s] = binary_oracle_fixture();
  for (std::size_t e = 0; e < m.missing_entries.size(); ++e) {
    const double p = binary_imputation_probability(m, s, e);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  s.beta(3) = 0.0;   // outcome coefficient of the binary covariate
  s.gamma(2) = 0.0;  // its coefficient in the exposure model
  for (std::size_t e = 0; e < m.missing_entries.size(); ++e) {
    const auto [i, col] = m.missing_entries[e];
    const double eta = s.alpha[0](0) + s.alpha[0](1) * s.z(static_cast<Eigen::Index>(i), 0);
    CHECK(binary_imputation_probability(m, s, e) == doctest::Approx(1.0 / (1.0 + std::exp(-eta))).epsilon(1e-12));
  }
}

TEST_CASE("with betaX = 0 the latent X conditional is the calibration conditional") {
  auto [m, s] = linear_oracle_fixture();
  s.beta(1) = 0.0;
  CalibrationModel cal;
  cal.form = CalibrationForm::Efficient;
  cal.mixed.gamma0 = s.gamma(0);
  cal.mixed.sigma2_XgZ = s.sigma2_XgZ;
  cal.mixed.sigma2_U = s.sigma2_U;
  cal.mixed.nu = s.nu;
  MEDataset d;
  d.outcome = ContinuousOutcome{m.y};
  for (std::size_t i = 0; i < m.n; ++i) d.w.push_back({m.w1[i], m.w2[i]});
  const auto pred = predict_conditional_x(cal, d);
  for (std::size_t i = 0; i < m.n; ++i) {
    const auto c = latent_x_conditional_linear(m, s, i);
    CHECK(c.mean == doctest::Approx(pred[i].mean).epsilon(1e-12));
    CHECK(c.variance == doctest::Approx(*pred[i].variance).epsilon(1e-12));
  }
}

TEST_CASE("latent X without measurements has precision betaX^2/sigma2 + 1/sigma2_XgZ") {
  MEDataset d;
  d.outcome = ContinuousOutcome{{0.5, 1.0}};
  d.w = {{0.2, std::nullopt}, {std::nullopt, std::nullopt}};
  const BayesModel m = make_bayes_model(d, {OutcomeKind::Linear, false}, PriorConfig{});
  Rng rng(2);
  ChainState s = initial_state(m, rng, false);
  s.beta = Eigen::Vector2d(0.1, 0.7);
  s.sigma2 = 0.5;
  s.sigma2_XgZ = 2.0;
  s.gamma = Eigen::VectorXd::Constant(1, -0.3);
  const auto c = latent_x_conditional_linear(m, s, 1);
  CHECK(1.0 / c.variance == doctest::Approx(0.49 / 0.5 + 0.5).epsilon(1e-12));
  CHECK(c.mean == doctest::Approx((0.7 * (1.0 - 0.1) / 0.5 + -0.3 / 2.0) * c.variance).epsilon(1e-12));
}

TEST_CASE("posterior X shrinks toward the exposure model as sigma2_U grows") {
  auto [m, s] = linear_oracle_fixture();
  s.beta(1) = 0.0;
  const std::size_t i = 1;  // one measurement
  const double wbar = *m.w1[i];
  const double prior_mean = s.gamma(0);
  double means[2];
  int k = 0;
  for (double s2u : {0.2, 2.0}) {
    ChainState u = s;
    u.sigma2_U = s2u;
    Rng rng(77);
    double sum = 0.0;
    for (int t = 0; t < 20000; ++t) {
      update_latent_x(m, u, rng);
      sum += u.x(static_cast<Eigen::Index>(i));
    }
    means[k++] = sum / 20000.0;
  }
  CHECK(std::abs(means[0] - wbar) < std::abs(means[1] - wbar));
  CHECK(std::abs(means[1] - prior_mean) < std::abs(means[0] - prior_mean));
}

// Gamma process

TEST_CASE("gamma process: tiny c gives the Breslow increments") {
  auto [m, s] = cox_oracle_fixture(1e-8);
  // exp(0.4 x) for x = 0.5, -0.2, 1.0, 0.3, -0.7; risk sets {all}, {2..5}, {4, 5}.
  const double e[] = {std::exp(0.2), std::exp(-0.08), std::exp(0.4), std::exp(0.12), std::exp(-0.28)};
  const double breslow[] = {1.0 / (e[0] + e[1] + e[2] + e[3] + e[4]), 1.0 / (e[1] + e[2] + e[3] + e[4]),
                            1.0 / (e[3] + e[4])};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto g = hazard_increment_conditional(m, s, j);
    CHECK(g.shape / g.rate == doctest::Approx(breslow[j]).epsilon(1e-6));
  }
}

TEST_CASE("gamma process: huge c pins increments to the prior guess") {
  auto [m, s] = cox_oracle_fixture(1e8);
  const double prior[] = {0.01 * 1.0, 0.01 * 1.0, 0.01 * 2.0};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto g = hazard_increment_conditional(m, s, j);
    CHECK(g.shape / g.rate == doctest::Approx(prior[j]).epsilon(1e-5));
  }
}

TEST_CASE("gamma process: unit hazard ratios give events over risk-set size") {
  auto [m, s] = cox_oracle_fixture(1e-10, 0.0);
  const double expected[] = {1.0 / 5.0, 1.0 / 4.0, 1.0 / 2.0};
  for (std::size_t j = 0; j < 3; ++j) {
    const auto g = hazard_increment_conditional(m, s, j);
    CHECK(g.shape / g.rate == doctest::Approx(expected[j]).epsilon(1e-8));
  }
}

TEST_CASE("gamma process draws average to the conditional means") {
  auto [m, s] = cox_oracle_fixture(0.5);
  Rng rng(4);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  const int draws = 200000;
  for (int t = 0; t < draws; ++t) {
    update_gamma_process(m, s, rng);
    sum += s.hazard_increments;
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const auto g = hazard_increment_conditional(m, s, j);
    const double sd = std::sqrt(g.shape) / g.rate;
    CHECK(std::abs(sum(static_cast<Eigen::Index>(j)) / draws - g.shape / g.rate) < 4.0 * sd / std::sqrt(draws));
  }
}

TEST_CASE("the hazard prior starts from time zero") {
  auto [m, s] = cox_oracle_fixture(1.0);
  REQUIRE(m.prior_increments.size() == 3);
  CHECK(m.prior_increments[0] == doctest::Approx(0.01));
  CHECK(m.prior_increments[1] == doctest::Approx(0.01));
  CHECK(m.prior_increments[2] == doctest::Approx(0.02));
  CHECK(m.event_counts == std::vector<int>{1, 1, 1});
}

// Whole-sampler properties

TEST_CASE("X observed exactly: beta posterior matches the normal-inverse-gamma posterior") {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  std::vector<double> y;
  std::vector<Measurements> w;
  for (int i = 0; i < 50; ++i) {
    const double x = nd(gen);
    y.push_back(0.5 + 1.5 * x + 0.8 * nd(gen));
    w.push_back({x, std::nullopt});
  }
  const MEDataset d = linear_dataset(y, w);
  PriorConfig pr;
  pr.fixed_sigma2_U = 0.0;
  const auto r = run_mcmc(d, {OutcomeKind::Linear, false}, pr, small_config(4, 500, 6000));

  // Conjugate oracle with beta | sigma2 ~ N(0, sigma2 V0), V0 = 1e4 I.
  Eigen::MatrixXd x(50, 2);
  Eigen::VectorXd yv(50);
  for (int i = 0; i < 50; ++i) x(i, 0) = 1.0, x(i, 1) = *w[static_cast<std::size_t>(i)].w1, yv(i) = y[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd vn = (x.transpose() * x + Eigen::Matrix2d::Identity() / 1e4).inverse();
  const Eigen::VectorXd mn = vn * x.transpose() * yv;
  const double an = 0.5 + 25.0;
  const double bn = 0.5 + 0.5 * (yv.squaredNorm() - mn.dot(vn.inverse() * mn));
  for (int j = 0; j < 2; ++j) {
    const auto draws = pooled(r, j == 0 ? "beta0" : "betaX");
    const double sd = std::sqrt(bn / (an - 1.0) * vn(j, j));
    CHECK(mean(draws) == doctest::Approx(mn(j)).epsilon(0.02));
    CHECK(sample_sd(draws) == doctest::Approx(sd).epsilon(0.02));
  }
}

TEST_CASE("prior-only linear sampling reproduces the coefficient prior") {
  const auto r = run_mcmc(empty_dataset(OutcomeKind::Linear), {OutcomeKind::Linear, false}, PriorConfig{},
                          small_config(2, 10, 20000));
  const auto b = pooled(r, "betaX");
  CHECK(std::abs(mean(b)) < 3.0 * 100.0 / std::sqrt(40000.0));
  CHECK(sample_sd(b) == doctest::Approx(100.0).epsilon(0.02));
}

TEST_CASE("informative prior puts 95% of exp(betaX) in (0.1, 10)") {
  PriorConfig pr;
  pr.exposure_beta_variance = 1.38;
  const auto r = run_mcmc(empty_dataset(OutcomeKind::Linear), {OutcomeKind::Linear, false}, pr,
                          small_config(2, 10, 20000));
  auto b = pooled(r, "betaX");
  for (auto& v : b) v = std::exp(v);
  const Interval ci = percentile_interval(b, 0.95);
  CHECK(ci.lower == doctest::Approx(0.1).epsilon(0.05));
  CHECK(ci.upper == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("MH coefficient block reproduces the prior with no data") {
  PriorConfig pr;
  pr.exposure_beta_variance = 1.38;
  const auto r = run_mcmc(empty_dataset(OutcomeKind::Logistic), {OutcomeKind::Logistic, false}, pr,
                          small_config(2, 2000, 40000));
  for (const auto& [name, var] : {std::pair<std::string, double>{"beta0", 1e4}, {"betaX", 1.38}}) {
    const auto c0 = chain_draws(r, 0, name);
    const auto b = pooled(r, name);
    INFO(name);
    CHECK(std::abs(mean(b)) < 3.0 * batch_mean_se(c0) / std::sqrt(2.0) + 1e-12);
    CHECK(sample_sd(b) == doctest::Approx(std::sqrt(var)).epsilon(0.1));
  }
}

TEST_CASE("Weibull shape and phi blocks reproduce their priors with no data") {
  PriorConfig pr;
  pr.weibull_shape_prior_rate = 1.0;
  pr.weibull_phi_variance = 4.0;
  const auto r = run_mcmc(empty_dataset(OutcomeKind::Weibull), {OutcomeKind::Weibull, false}, pr,
                          small_config(1, 2000, 60000));
  const auto shape = chain_draws(r, 0, "shape");
  const auto b = chain_draws(r, 0, "betaX");
  std::vector<double> phi;
  for (std::size_t t = 0; t < b.size(); ++t) phi.push_back(-b[t] / shape[t]);
  CHECK(std::abs(mean(shape) - 1.0) < 3.0 * batch_mean_se(shape));
  CHECK(std::abs(mean(phi)) < 3.0 * batch_mean_se(phi));
  CHECK(sample_sd(phi) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("identical seeds give identical draws regardless of thread count") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd;
  std::vector<int> yb;
  std::vector<Measurements> w;
  for (int i = 0; i < 80; ++i) {
    const double x = nd(gen);
    yb.push_back(nd(gen) < x ? 1 : 0);
    w.push_back({x + 0.5 * nd(gen), i < 10 ? std::optional<double>(x + 0.5 * nd(gen)) : std::nullopt});
  }
  MEDataset d;
  d.outcome = BinaryOutcome{yb};
  d.w = w;
  MCMCConfig cfg = small_config(3, 200, 300);
  const auto a = run_mcmc(d, {OutcomeKind::Logistic, false}, PriorConfig{}, cfg);
  cfg.threads = 3;
  const auto b = run_mcmc(d, {OutcomeKind::Logistic, false}, PriorConfig{}, cfg);
  for (std::size_t c = 0; c < 3; ++c) CHECK(a.chains[c].draws == b.chains[c].draws);
  cfg.seed = 12;
  const auto other = run_mcmc(d, {OutcomeKind::Logistic, false}, PriorConfig{}, cfg);
  CHECK(other.chains[0].draws != a.chains[0].draws);
}

TEST_CASE("proposal scales are frozen after burn-in") {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> nd;
  SurvivalOutcome s;
  std::vector<Measurements> w;
  for (int i = 0; i < 60; ++i) {
    const double x = nd(gen);
    s.time.push_back(std::exp(-x + nd(gen)));
    s.event.push_back(i % 4 != 0);
    w.push_back({x + 0.6 * nd(gen), i < 15 ? std::optional<double>(x + 0.6 * nd(gen)) : std::nullopt});
  }
  MEDataset d;
  d.outcome = s;
  d.w = w;
  const auto r = run_mcmc(d, {OutcomeKind::Cox, false}, PriorConfig{}, small_config(2, 300, 200));
  for (const auto& c : r.chains) {
    CHECK(c.burnin_scales == c.final_scales);
    for (const auto& [name, rate] : c.acceptance_rates) {
      CHECK(rate >= 0.0);
      CHECK(rate <= 1.0);
    }
  }
  const auto& h = std::get<HazardIncrements>(r.fit.estimates.eta);
  CHECK(h.event_times.size() == h.increments.size());
  CHECK(h.event_times.size() == 45);
}

TEST_CASE("failing the Rhat threshold after all extensions is flagged, not thrown") {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> nd;
  std::vector<double> y;
  std::vector<Measurements> w;
  for (int i = 0; i < 40; ++i) {
    const double x = nd(gen);
    y.push_back(x + nd(gen));
    w.push_back({x + nd(gen), i < 8 ? std::optional<double>(x + nd(gen)) : std::nullopt});
  }
  MCMCConfig cfg = small_config(3, 50, 50);
  cfg.rhat_threshold = 1.0 + 1e-12;
  cfg.max_extensions = 2;
  const auto r = run_mcmc(linear_dataset(y, w), {OutcomeKind::Linear, false}, PriorConfig{}, cfg);
  CHECK_FALSE(r.converged);
  CHECK_FALSE(r.fit.converged);
  CHECK(r.extensions == 2);
  CHECK(r.iterations_per_chain == 200);
  CHECK(r.chains[0].draws[0].size() == 200);
  CHECK(r.fit.diagnostics.at("converged") == 0.0);
}

TEST_CASE("Weibull: censor-free exponential data give a shape near one") {
  std::mt19937_64 gen(15);
  std::exponential_distribution<double> ex(0.5);
  std::normal_distribution<double> nd;
  SurvivalOutcome s;
  std::vector<Measurements> w;
  for (int i = 0; i < 400; ++i) {
    s.time.push_back(ex(gen));
    s.event.push_back(1);
    const double x = nd(gen);
    w.push_back({x + 0.3 * nd(gen), i < 40 ? std::optional<double>(x + 0.3 * nd(gen)) : std::nullopt});
  }
  MEDataset d;
  d.outcome = s;
  d.w = w;
  const auto r = run_mcmc(d, {OutcomeKind::Weibull, false}, PriorConfig{}, small_config(2, 500, 1500));
  const auto shape = pooled(r, "shape");
  // Posterior SD of the shape is about 1/sqrt(400) here.
  CHECK(std::abs(mean(shape) - 1.0) < 0.15);
  CHECK(std::abs(r.summary.at("beta0").mean - std::log(0.5)) < 0.25);
}

TEST_CASE("Weibull with the shape fixed at one: phi priors equal priors on -beta") {
  std::mt19937_64 gen(16);
  std::exponential_distribution<double> ex(1.0);
  std::normal_distribution<double> nd;
  SurvivalOutcome s;
  std::vector<Measurements> w;
  for (int i = 0; i < 150; ++i) {
    const double x = nd(gen);
    s.time.push_back(ex(gen) / std::exp(-0.5 + 0.7 * x));
    s.event.push_back(s.time.back() < 3.0);
    s.time.back() = std::min(s.time.back(), 3.0);
    w.push_back({x + 0.4 * nd(gen), i < 30 ? std::optional<double>(x + 0.4 * nd(gen)) : std::nullopt});
  }
  MEDataset d;
  d.outcome = s;
  d.w = w;
  PriorConfig transformed;
  transformed.fixed_weibull_shape = 1.0;
  transformed.weibull_phi_variance = 1e6;
  PriorConfig direct = transformed;
  direct.weibull_beta_transform = false;
  direct.beta_variance = 1e6;
  const auto a = run_mcmc(d, {OutcomeKind::Weibull, false}, transformed, small_config(2, 1000, 6000, 1));
  const auto b = run_mcmc(d, {OutcomeKind::Weibull, false}, direct, small_config(2, 1000, 6000, 2));
  for (const char* name : {"beta0", "betaX"}) {
    const auto da = pooled(a, name), db = pooled(b, name);
    const double se = std::hypot(batch_mean_se(da), batch_mean_se(db));
    INFO(name);
    CHECK(std::abs(mean(da) - mean(db)) < 4.0 * se);
    CHECK(sample_sd(da) == doctest::Approx(sample_sd(db)).epsilon(0.1));
  }
}

TEST_CASE("draws export as CSV with a chain column") {
  std::vector<double> y;
  std::vector<Measurements> w;
  for (int i = 0; i < 12; ++i) {
    y.push_back(i * 0.3);
    w.push_back({i * 0.25 + (i % 3) * 0.1, i < 4 ? std::optional<double>(i * 0.25) : std::nullopt});
  }
  MCMCConfig cfg = small_config(2, 5, 7);
  cfg.keep_latent_x = true;
  cfg.latent_thin = 2;
  const auto r = run_mcmc(linear_dataset(y, w), {OutcomeKind::Linear, false}, PriorConfig{}, cfg);
  std::ostringstream out, lat;
  write_draws_csv(out, r);
  write_latent_csv(lat, r);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("chain,iteration,beta0,betaX,sigma2,gamma0,sigma2_XgZ,sigma2_U", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 14);
  std::istringstream lin(lat.str());
  std::getline(lin, header);
  CHECK(header.rfind("chain,iteration,x_1,", 0) == 0);
  rows = 0;
  std::string last;
  while (std::getline(lin, line)) ++rows, last = line;
  CHECK(rows == 8);  // iterations 1, 3, 5, 7 per chain
  CHECK(last.rfind("2,7,", 0) == 0);
}

TEST_CASE("invalid priors and configs are input errors") {
  PriorConfig pr;
  pr.gp_c = 0.0;
  CHECK_THROWS_AS(pr.validate(), InputError);
  MCMCConfig cfg;
  cfg.rhat_threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  CHECK(MCMCConfig::defaults_for(OutcomeKind::Cox).chains == 3);
  CHECK(MCMCConfig::defaults_for(OutcomeKind::Linear).chains == 5);
}

TEST_CASE("Cox without events is rejected") {
  MEDataset d;
  d.outcome = SurvivalOutcome{{1.0, 2.0}, {0, 0}};
  d.w = {{0.1, std::nullopt}, {0.2, std::nullopt}};
  CHECK_THROWS_AS(make_bayes_model(d, {OutcomeKind::Cox, false}, PriorConfig{}), InsufficientDataError);
}
