#include "mecal/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <tuple>

#include "mecal/csv.hpp"
#include "mecal/errors.hpp"
#include "mecal/parallel.hpp"
#include "mecal/percentile.hpp"
#include "mecal/random.hpp"
#include "mecal/regression_calibration.hpp"

namespace mecal {

namespace {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

const double kZNoise = std::sqrt(1.0 - kCovXZ * kCovXZ);

struct LinearPredictors {
  std::vector<double> lp;  // betaX x + betaZ z, intercept excluded
};

LinearPredictors mc_predictors(double beta_x, double beta_z, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  LinearPredictors out;
  out.lp.resize(draws);
  for (auto& v : out.lp) {
    const double x = rng.normal();
    const double z = kCovXZ * x + kZNoise * rng.normal();
    v = beta_x * x + beta_z * z;
  }
  return out;
}

/// Root of an increasing function on [lo, hi].
double bisect(const std::function<double(double)>& f, double lo, double hi, const std::string& what) {
  double flo = f(lo), fhi = f(hi);
  if (!(flo < 0.0 && fhi > 0.0)) throw FitError("cannot bracket the root for " + what);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Exactly round(fraction n) distinct rows by a partial Fisher-Yates shuffle.
std::vector<char> replicate_subset(std::size_t n, double fraction, Rng& rng) {
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<char> chosen(n, 0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = k + rng.index(n - k);
    std::swap(idx[k], idx[j]);
    chosen[idx[k]] = 1;
  }
  return chosen;
}

struct Exposures {
  std::vector<double> x, z;
  std::vector<Measurements> w;
};

Exposures draw_exposures(const Scenario& s, const Nuisance& p, Rng& rng) {
  Exposures e;
  e.x.resize(s.n);
  e.z.resize(s.n);
  e.w.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    e.x[i] = rng.normal();
    e.z[i] = kCovXZ * e.x[i] + kZNoise * rng.normal();
  }
  const double sd_u = std::sqrt(p.sigma2_U);
  for (std::size_t i = 0; i < s.n; ++i) e.w[i].w1 = s.zero_error ? e.x[i] : e.x[i] + sd_u * rng.normal();
  const auto chosen = replicate_subset(s.n, s.replication_fraction, rng);
  for (std::size_t i = 0; i < s.n; ++i)
    if (chosen[i]) e.w[i].w2 = s.zero_error ? e.x[i] : e.x[i] + sd_u * rng.normal();
  return e;
}

Covariate full_covariate(std::string name, std::vector<double> values) {
  Covariate c;
  c.name = std::move(name);
  c.present.assign(values.size(), 1);
  c.values = std::move(values);
  return c;
}

std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

double json_number(const nlohmann::ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void Scenario::validate() const {
  if (!(reliability > 0.0 && reliability < 1.0)) throw InputError("reliability must lie in (0, 1)");
  if (!(replication_fraction > 0.0 && replication_fraction <= 1.0))
    throw InputError("replication fraction must lie in (0, 1]");
  if (n < 10) throw InputError("scenario needs n >= 10");
  if (reps < 1) throw InputError("scenario needs reps >= 1");
  if (kind == OutcomeKind::Linear && !(effect > 0.0 && effect < 1.0)) throw InputError("R^2 must lie in (0, 1)");
  if (!std::isfinite(effect)) throw InputError("effect must be finite");
}

double solve_logistic_intercept(double beta_x, double beta_z, double target, std::size_t draws, std::uint64_t seed) {
  const auto mc = mc_predictors(beta_x, beta_z, draws, seed);
  const auto f = [&](double b0) {
    double sum = 0.0;
    for (double v : mc.lp) sum += expit(b0 + v);
    return sum / static_cast<double>(draws) - target;
  };
  return bisect(f, -40.0, 40.0, "the logistic intercept");
}

double solve_weibull_lambda(double beta_x, double beta_z, double kappa, double follow_up, double target,
                            std::size_t draws, std::uint64_t seed) {
  const auto mc = mc_predictors(beta_x, beta_z, draws, seed);
  const double tk = std::pow(follow_up, kappa);
  const auto f = [&](double log_lambda) {
    const double scale = std::exp(log_lambda) * tk;
    double sum = 0.0;
    for (double v : mc.lp) sum += -std::expm1(-scale * std::exp(v));
    return sum / static_cast<double>(draws) - target;
  };
  return std::exp(bisect(f, -80.0, 20.0, "the Weibull scale"));
}

Nuisance derive_nuisance(const Scenario& s) {
  s.validate();
  Nuisance p;
  p.sigma2_U = s.zero_error ? 0.0 : (1.0 - s.reliability) / s.reliability;
  if (s.kind == OutcomeKind::Linear) {
    p.beta_x = p.beta_z = 1.0;
    p.sigma2 = 2.5 * (1.0 - s.effect) / s.effect;
    return p;
  }
  p.beta_x = p.beta_z = s.effect;

  static std::mutex mu;
  static std::map<std::tuple<int, double>, double> cache;
  const bool survival = s.kind == OutcomeKind::Cox || s.kind == OutcomeKind::Weibull;
  const auto key = std::make_tuple(survival ? 1 : 0, s.effect);
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) {
      (survival ? p.lambda : p.beta0) = it->second;
      return p;
    }
  }
  const double v = survival ? solve_weibull_lambda(p.beta_x, p.beta_z, p.kappa, p.follow_up)
                            : solve_logistic_intercept(p.beta_x, p.beta_z);
  {
    std::lock_guard lock(mu);
    cache.emplace(key, v);
  }
  (survival ? p.lambda : p.beta0) = v;
  return p;
}

MEDataset generate_linear(const Scenario& s, const Nuisance& p, std::size_t rep) {
  Rng rng(derive_seed(s.seed, rep));
  auto e = draw_exposures(s, p, rng);
  ContinuousOutcome y;
  const double sd = std::sqrt(p.sigma2);
  for (std::size_t i = 0; i < s.n; ++i)
    y.y.push_back(p.beta0 + p.beta_x * e.x[i] + p.beta_z * e.z[i] + sd * rng.normal());
  MEDataset d;
  d.outcome = std::move(y);
  d.w = std::move(e.w);
  d.z = {full_covariate("z", std::move(e.z))};
  return d;
}

MEDataset generate_logistic(const Scenario& s, const Nuisance& p, std::size_t rep) {
  Rng rng(derive_seed(s.seed, rep));
  auto e = draw_exposures(s, p, rng);
  BinaryOutcome y;
  for (std::size_t i = 0; i < s.n; ++i)
    y.y.push_back(rng.bernoulli(expit(p.beta0 + p.beta_x * e.x[i] + p.beta_z * e.z[i])) ? 1 : 0);
  MEDataset d;
  d.outcome = std::move(y);
  d.w = std::move(e.w);
  d.z = {full_covariate("z", std::move(e.z))};
  return d;
}

MEDataset generate_cox(const Scenario& s, const Nuisance& p, std::size_t rep) {
  Rng rng(derive_seed(s.seed, rep));
  auto e = draw_exposures(s, p, rng);
  SurvivalOutcome y;
  for (std::size_t i = 0; i < s.n; ++i) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    const double rate = p.lambda * std::exp(p.beta_x * e.x[i] + p.beta_z * e.z[i]);
    const double t = std::pow(-std::log(u) / rate, 1.0 / p.kappa);
    const bool event = t < p.follow_up;
    y.time.push_back(event ? t : p.follow_up);
    y.event.push_back(event ? 1 : 0);
  }
  MEDataset d;
  d.outcome = std::move(y);
  d.w = std::move(e.w);
  d.z = {full_covariate("z", std::move(e.z))};
  return d;
}

MEDataset generate_dataset(const Scenario& s, const Nuisance& p, std::size_t rep) {
  switch (s.kind) {
    case OutcomeKind::Linear: return generate_linear(s, p, rep);
    case OutcomeKind::Logistic: return generate_logistic(s, p, rep);
    default: return generate_cox(s, p, rep);
  }
}

namespace {

struct MarSubject {
  double age, x, w1;
  std::optional<double> w2;
  int smoker;
  double time;
  int event;
};

MarSubject draw_mar_subject(const MarDesign& d, Rng& rng) {
  MarSubject s;
  s.age = rng.normal();
  s.smoker = rng.bernoulli(expit(d.alpha0 + d.alpha_age * s.age)) ? 1 : 0;
  s.x = d.gamma0 + d.gamma_age * s.age + d.gamma_smoker * s.smoker + std::sqrt(d.sigma2_XgZ) * rng.normal();
  const double sd_u = std::sqrt(d.sigma2_U);
  s.w1 = s.x + sd_u * rng.normal();
  if (rng.bernoulli(d.second_measurement_fraction)) s.w2 = d.nu + s.x + sd_u * rng.normal();
  const double lp = d.beta0 + d.beta_x * s.x + d.beta_age * s.age + d.beta_smoker * s.smoker;
  // Weibull hazard r t^(r-1) e^lp: H(t) = t^r e^lp.
  const double t = std::pow(-std::log(1.0 - rng.uniform()) / std::exp(lp), 1.0 / d.shape);
  s.event = t < d.follow_up ? 1 : 0;
  s.time = s.event ? t : d.follow_up;
  return s;
}

double missing_logit_offset(const MarDesign& d, const MarSubject& s) {
  return d.delta_age * s.age + d.delta_event * s.event;
}

}  // namespace

double solve_missingness_intercept(const MarDesign& d, std::size_t draws) {
  Rng rng(0x6d6172);
  std::vector<double> offsets(draws);
  for (auto& o : offsets) o = missing_logit_offset(d, draw_mar_subject(d, rng));
  const auto f = [&](double delta0) {
    double sum = 0.0;
    for (double o : offsets) sum += expit(delta0 + o);
    return sum / static_cast<double>(draws) - d.missing_fraction;
  };
  return bisect(f, -40.0, 40.0, "the missingness intercept");
}

MEDataset generate_mar_weibull(const MarDesign& d, double delta0, std::size_t rep) {
  Rng rng(derive_seed(d.seed, rep));
  MEDataset out;
  SurvivalOutcome y;
  Covariate age = full_covariate("age", {});
  Covariate smoker;
  smoker.name = "smoker";
  smoker.binary_with_missing = true;
  for (std::size_t i = 0; i < d.n; ++i) {
    const auto s = draw_mar_subject(d, rng);
    const bool missing = rng.bernoulli(expit(delta0 + missing_logit_offset(d, s)));
    y.time.push_back(s.time);
    y.event.push_back(s.event);
    out.w.push_back({s.w1, s.w2});
    age.values.push_back(s.age);
    age.present.push_back(1);
    smoker.values.push_back(missing ? 0.0 : s.smoker);
    smoker.present.push_back(missing ? 0 : 1);
  }
  out.outcome = std::move(y);
  out.z = {std::move(age), std::move(smoker)};
  return out;
}

PriorConfig simulation_priors(OutcomeKind kind) {
  PriorConfig p;
  if (kind != OutcomeKind::Linear) p.exposure_beta_variance = 1.38;
  return p;
}

double ScenarioResult::truth() const { return nuisance.beta_x; }

std::map<Method, MethodSummary> summarize(const std::vector<ReplicateRecord>& reps,
                                          const std::vector<Method>& methods, double truth) {
  std::map<Method, MethodSummary> out;
  for (Method m : methods) {
    MethodSummary s;
    std::vector<double> est;
    int with_interval = 0, covered = 0;
    for (const auto& r : reps) {
      const auto it = r.methods.find(m);
      if (it == r.methods.end() || !it->second.ok) {
        ++s.failed;
        continue;
      }
      const auto& rec = it->second;
      est.push_back(rec.estimate);
      if (!rec.converged) ++s.nonconverged;
      if (rec.interval) {
        ++with_interval;
        if (rec.interval->lower <= truth && truth <= rec.interval->upper) ++covered;
      }
    }
    s.used = static_cast<int>(est.size());
    if (s.used > 0) {
      s.mean = mean(est);
      s.sd = s.used > 1 ? sample_sd(est) : 0.0;
      s.mean_se = s.sd / std::sqrt(static_cast<double>(s.used));
      s.sd_se = s.used > 1 ? s.sd / std::sqrt(2.0 * (s.used - 1)) : 0.0;
    }
    if (s.used > 0 && with_interval == s.used) {
      const double p = static_cast<double>(covered) / s.used;
      s.coverage = p;
      s.coverage_se = std::sqrt(p * (1.0 - p) / s.used);
    }
    out[m] = s;
  }
  return out;
}

namespace {

MethodRecord fit_one(Method m, const MEDataset& d, const OutcomeSpec& spec, const RunOptions& opt,
                     const PriorConfig& priors, std::uint64_t stream) {
  MethodRecord rec;
  try {
    FitResult f;
    switch (m) {
      case Method::Naive: f = fit_naive(d, spec); break;
      case Method::RcSimple:
      case Method::RcEfficient: {
        const auto form = m == Method::RcSimple ? CalibrationForm::Simple : CalibrationForm::Efficient;
        if (opt.boot_reps > 0) {
          BootstrapOptions b;
          b.replicates = opt.boot_reps;
          b.seed = derive_seed(stream, 2);
          f = bootstrap_rc(d, spec, form, b).result;
        } else {
          f = fit_rc(d, spec, form);
        }
        break;
      }
      case Method::Bayes: {
        MCMCConfig c = opt.mcmc;
        c.seed = derive_seed(stream, 3);
        c.threads = 1;
        c.keep_latent_x = false;
        f = run_mcmc(d, spec, priors, c).fit;
        break;
      }
    }
    rec.ok = true;
    rec.estimate = f.estimates.betaX;
    rec.converged = f.converged;
    if (auto it = f.intervals.find("betaX"); it != f.intervals.end()) rec.interval = it->second;
  } catch (const FitError& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

ScenarioResult run_scenario(const Scenario& s, const RunOptions& opt) {
  s.validate();
  if (opt.methods.empty()) throw InputError("no methods requested");
  opt.mcmc.validate();
  ScenarioResult out;
  out.scenario = s;
  out.nuisance = derive_nuisance(s);
  const PriorConfig priors = opt.priors.value_or(simulation_priors(s.kind));
  priors.validate();
  const OutcomeSpec spec{s.kind, false};
  out.replicates.resize(static_cast<std::size_t>(s.reps));
  parallel_for(out.replicates.size(), opt.threads, [&](std::size_t r) {
    const MEDataset d = generate_dataset(s, out.nuisance, r);
    const std::uint64_t stream = derive_seed(derive_seed(s.seed, r), 1);
    ReplicateRecord rec;
    rec.rep = r;
    for (Method m : opt.methods) rec.methods[m] = fit_one(m, d, spec, opt, priors, stream);
    out.replicates[r] = std::move(rec);
  });
  out.summary = summarize(out.replicates, opt.methods, out.truth());
  return out;
}

TableFormat parse_table_format(const std::string& s) {
  if (s == "md" || s == "markdown") return TableFormat::Markdown;
  if (s == "csv") return TableFormat::Csv;
  if (s == "latex" || s == "tex") return TableFormat::Latex;
  throw InputError("unknown table format '" + s + "'");
}

namespace {

struct Column {
  std::string title;              // markdown / latex header
  std::vector<std::string> keys;  // csv headers, one per number
  std::function<std::vector<double>(const ScenarioResult&)> values;
  bool paired = false;  // "mean (sd)" cell
  int decimals = 2;
};

const MethodSummary* find_summary(const ScenarioResult& r, Method m) {
  const auto it = r.summary.find(m);
  return it == r.summary.end() ? nullptr : &it->second;
}

std::optional<Method> rc_method(const std::vector<ScenarioResult>& rs) {
  for (Method m : {Method::RcEfficient, Method::RcSimple})
    for (const auto& r : rs)
      if (find_summary(r, m)) return m;
  return std::nullopt;
}

bool any_has(const std::vector<ScenarioResult>& rs, Method m) {
  return std::any_of(rs.begin(), rs.end(), [&](const ScenarioResult& r) { return find_summary(r, m) != nullptr; });
}

bool any_coverage(const std::vector<ScenarioResult>& rs, Method m) {
  return std::any_of(rs.begin(), rs.end(), [&](const ScenarioResult& r) {
    const auto* s = find_summary(r, m);
    return s && s->coverage;
  });
}

constexpr double kNa = std::numeric_limits<double>::quiet_NaN();

std::vector<Column> table_columns(const std::vector<ScenarioResult>& rs, bool with_mcse) {
  std::vector<Column> cols;
  const auto mean_sd = [](Method m) {
    return [m](const ScenarioResult& r) -> std::vector<double> {
      const auto* s = find_summary(r, m);
      return s && s->used > 0 ? std::vector<double>{s->mean, s->sd} : std::vector<double>{kNa, kNa};
    };
  };
  const auto mcse = [](Method m) {
    return [m](const ScenarioResult& r) -> std::vector<double> {
      const auto* s = find_summary(r, m);
      return {s && s->used > 0 ? s->mean_se : kNa};
    };
  };
  const auto coverage = [](Method m) {
    return [m](const ScenarioResult& r) -> std::vector<double> {
      const auto* s = find_summary(r, m);
      return {s && s->coverage ? *s->coverage : kNa};
    };
  };
  const auto add_method = [&](Method m, const std::string& title, const std::string& key, bool compact_layout) {
    cols.push_back({title, {key + "_mean", key + "_sd"}, mean_sd(m), true});
    if (with_mcse) cols.push_back({title + " MC-SE", {key + "_mean_se"}, mcse(m), false, 3});
    if (!compact_layout && any_coverage(rs, m)) cols.push_back({title + " CI", {key + "_coverage"}, coverage(m)});
  };

  const bool empty = rs.empty();
  const auto rc = rc_method(rs);
  if (rc || empty) {
    const Method m = rc.value_or(Method::RcEfficient);
    add_method(m, "RC", "rc", true);
    if (any_coverage(rs, m)) cols.push_back({"RC CI", {"rc_coverage"}, coverage(m)});
  }
  if (any_has(rs, Method::Bayes) || empty) {
    add_method(Method::Bayes, "Bayes mean", "bayes", true);
    cols.push_back({"Bayes CI", {"bayes_coverage"}, coverage(Method::Bayes)});
    if (with_mcse) cols.push_back({"Bayes CI MC-SE", {"bayes_coverage_se"}, [](const ScenarioResult& r) {
                                     const auto* s = find_summary(r, Method::Bayes);
                                     return std::vector<double>{s && s->coverage_se ? *s->coverage_se : kNa};
                                   }, false, 3});
  }
  if (any_has(rs, Method::Naive)) add_method(Method::Naive, "Naive", "naive", false);
  return cols;
}

std::string effect_title(const std::vector<ScenarioResult>& rs, TableFormat f) {
  const bool linear = std::all_of(rs.begin(), rs.end(), [](const auto& r) { return r.scenario.kind == OutcomeKind::Linear; });
  const bool other = std::none_of(rs.begin(), rs.end(), [](const auto& r) { return r.scenario.kind == OutcomeKind::Linear; });
  if (rs.empty() || linear) return f == TableFormat::Csv ? "r2" : (f == TableFormat::Latex ? "$R^{2}$" : "R2");
  if (other) return f == TableFormat::Csv ? "beta_x" : (f == TableFormat::Latex ? "$\\beta_{X}$" : "betaX");
  return "effect";
}

}  // namespace

std::string render_table(const std::vector<ScenarioResult>& results, TableFormat format, bool with_mcse) {
  const auto cols = table_columns(results, with_mcse);
  const bool mixed = std::any_of(results.begin(), results.end(),
                                 [&](const auto& r) { return r.scenario.kind != results.front().scenario.kind; });
  std::ostringstream out;
  if (format == TableFormat::Csv) {
    if (mixed) out << "outcome,";
    out << "reliability," << effect_title(results, format);
    for (const auto& c : cols)
      for (const auto& k : c.keys) out << ',' << k;
    out << '\n';
    for (const auto& r : results) {
      if (mixed) out << to_string(r.scenario.kind) << ',';
      out << format_exact(r.scenario.reliability) << ',' << format_exact(r.scenario.effect);
      for (const auto& c : cols)
        for (double v : c.values(r)) out << ',' << (std::isfinite(v) ? fixed(v, c.decimals) : "");
      out << '\n';
    }
    return out.str();
  }

  std::vector<std::string> header{"Reliability", effect_title(results, format)};
  if (mixed) header.insert(header.begin(), "Outcome");
  for (const auto& c : cols) header.push_back(c.title);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    std::vector<std::string> row{format_exact(r.scenario.reliability), format_exact(r.scenario.effect)};
    if (mixed) row.insert(row.begin(), to_string(r.scenario.kind));
    for (const auto& c : cols) {
      const auto v = c.values(r);
      row.push_back(c.paired ? fixed(v[0], c.decimals) + " (" + fixed(v[1], c.decimals) + ")" : fixed(v[0], c.decimals));
    }
    rows.push_back(std::move(row));
  }

  if (format == TableFormat::Markdown) {
    const auto line = [&](const std::vector<std::string>& cells) {
      out << '|';
      for (const auto& c : cells) out << ' ' << c << " |";
      out << '\n';
    };
    line(header);
    out << '|';
    for (std::size_t k = 0; k < header.size(); ++k) out << "---|";
    out << '\n';
    for (const auto& r : rows) line(r);
    return out.str();
  }

  out << "\\begin{tabular}{" << std::string(header.size(), 'l') << "}\n  \\hline\n";
  const auto line = [&](const std::vector<std::string>& cells) {
    out << "  ";
    for (std::size_t k = 0; k < cells.size(); ++k) out << (k ? " & " : "") << cells[k];
    out << " \\\\\n";
  };
  line(header);
  out << "  \\hline\n";
  for (const auto& r : rows) line(r);
  out << "  \\hline\n\\end{tabular}\n";
  return out.str();
}

nlohmann::ordered_json to_json(const ScenarioResult& r) {
  using J = nlohmann::ordered_json;
  const auto& s = r.scenario;
  J j;
  j["scenario"] = {{"outcome", to_string(s.kind)},
                   {"n", s.n},
                   {"reliability", s.reliability},
                   {"effect", s.effect},
                   {"replication_fraction", s.replication_fraction},
                   {"reps", s.reps},
                   {"seed", s.seed},
                   {"zero_error", s.zero_error}};
  const auto& p = r.nuisance;
  j["nuisance"] = {{"sigma2_U", p.sigma2_U}, {"beta0", p.beta0},   {"beta_x", p.beta_x},
                   {"beta_z", p.beta_z},     {"sigma2", p.sigma2}, {"lambda", p.lambda},
                   {"kappa", p.kappa},       {"follow_up", p.follow_up}};
  J summary = J::object();
  for (const auto& [m, v] : r.summary) {
    summary[to_string(m)] = {{"used", v.used},
                             {"failed", v.failed},
                             {"nonconverged", v.nonconverged},
                             {"mean", v.mean},
                             {"sd", v.sd},
                             {"mean_se", v.mean_se},
                             {"sd_se", v.sd_se},
                             {"coverage", v.coverage ? J(*v.coverage) : J(nullptr)},
                             {"coverage_se", v.coverage_se ? J(*v.coverage_se) : J(nullptr)}};
  }
  j["summary"] = std::move(summary);
  J reps = J::array();
  for (const auto& rec : r.replicates) {
    J e;
    e["rep"] = rec.rep;
    for (const auto& [m, v] : rec.methods) {
      J f = {{"ok", v.ok}};
      if (v.ok) {
        f["estimate"] = v.estimate;
        if (v.interval) {
          f["lower"] = v.interval->lower;
          f["upper"] = v.interval->upper;
        }
        f["converged"] = v.converged;
      } else {
        f["error"] = v.error;
      }
      e[to_string(m)] = std::move(f);
    }
    reps.push_back(std::move(e));
  }
  j["replicates"] = std::move(reps);
  return j;
}

ScenarioResult scenario_result_from_json(const nlohmann::ordered_json& j) {
  try {
    ScenarioResult r;
    const auto& s = j.at("scenario");
    r.scenario.kind = parse_outcome_kind(s.at("outcome").get<std::string>());
    r.scenario.n = s.at("n").get<std::size_t>();
    r.scenario.reliability = s.at("reliability").get<double>();
    r.scenario.effect = s.at("effect").get<double>();
    r.scenario.replication_fraction = s.at("replication_fraction").get<double>();
    r.scenario.reps = s.at("reps").get<int>();
    r.scenario.seed = s.at("seed").get<std::uint64_t>();
    r.scenario.zero_error = s.value("zero_error", false);
    if (j.contains("nuisance")) {
      const auto& p = j.at("nuisance");
      r.nuisance.sigma2_U = p.at("sigma2_U").get<double>();
      r.nuisance.beta0 = p.at("beta0").get<double>();
      r.nuisance.beta_x = p.at("beta_x").get<double>();
      r.nuisance.beta_z = p.at("beta_z").get<double>();
      r.nuisance.sigma2 = p.at("sigma2").get<double>();
      r.nuisance.lambda = p.at("lambda").get<double>();
      r.nuisance.kappa = p.at("kappa").get<double>();
      r.nuisance.follow_up = p.at("follow_up").get<double>();
    }
    for (const auto& [name, v] : j.at("summary").items()) {
      MethodSummary m;
      m.used = v.at("used").get<int>();
      m.failed = v.at("failed").get<int>();
      m.nonconverged = v.at("nonconverged").get<int>();
      m.mean = json_number(v.at("mean"));
      m.sd = json_number(v.at("sd"));
      m.mean_se = json_number(v.at("mean_se"));
      m.sd_se = json_number(v.at("sd_se"));
      if (!v.at("coverage").is_null()) m.coverage = v.at("coverage").get<double>();
      if (!v.at("coverage_se").is_null()) m.coverage_se = v.at("coverage_se").get<double>();
      r.summary[parse_method(name)] = m;
    }
    if (j.contains("replicates")) {
      for (const auto& e : j.at("replicates")) {
        ReplicateRecord rec;
        rec.rep = e.at("rep").get<std::size_t>();
        for (const auto& [name, v] : e.items()) {
          if (name == "rep") continue;
          MethodRecord m;
          m.ok = v.at("ok").get<bool>();
          if (m.ok) {
            m.estimate = json_number(v.at("estimate"));
            if (v.contains("lower")) m.interval = Interval{json_number(v.at("lower")), json_number(v.at("upper"))};
            m.converged = v.value("converged", true);
          } else {
            m.error = v.value("error", "");
          }
          rec.methods[parse_method(name)] = m;
        }
        r.replicates.push_back(std::move(rec));
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed scenario result: ") + e.what());
  }
}

}  // namespace mecal
