#include "mecal/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "mecal/bayes_engine.hpp"
#include "mecal/csv.hpp"
#include "mecal/errors.hpp"
#include "mecal/parallel.hpp"
#include "mecal/regression_calibration.hpp"
#include "mecal/sim_harness.hpp"
#include "mecal/version.hpp"

namespace mecal {

using Json = nlohmann::ordered_json;

namespace {

struct PriorFlags {
  std::optional<double> beta_var;
  bool informative = false;
  std::optional<double> gp_c;
  std::optional<double> gp_rate;
  std::optional<double> weibull_shape_rate;
};

struct McmcFlags {
  std::optional<int> chains, burnin, iters, max_extensions;
  std::optional<double> rhat_max;
};

struct FitArgs {
  std::string data;
  std::string model = "linear";
  std::vector<std::string> methods;
  std::vector<std::string> binary;
  bool exam_shift = false;
  double level = 0.95;
  int boot_reps = 1000;
  PriorFlags priors;
  McmcFlags mcmc;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
  std::string format = "json";
  std::string draws;
  std::string latent;
  int latent_thin = 1;
};

struct SimulateArgs {
  std::string config;
  std::vector<std::string> methods;
  std::optional<int> reps;
  std::optional<int> boot_reps;
  bool paper_scale = false;
  PriorFlags priors;
  McmcFlags mcmc;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
  std::string format = "json";
};

struct ReportArgs {
  std::vector<std::string> results;
  std::string format = "md";
  bool mcse = false;
  std::string out;
};

void add_prior_flags(CLI::App* app, PriorFlags& p) {
  app->add_option("--prior-beta-var", p.beta_var, "Prior variance of the outcome coefficients");
  app->add_flag("--prior-beta-var-informative", p.informative,
                "N(0, 1.38) prior on betaX and betaZ (95% of exp(beta) in (0.1, 10))");
  app->add_option("--gp-c", p.gp_c, "Gamma-process confidence c");
  app->add_option("--gp-rate", p.gp_rate, "Gamma-process prior hazard rate r");
  app->add_option("--weibull-shape-rate", p.weibull_shape_rate, "Exponential prior rate for the Weibull shape");
}

void add_mcmc_flags(CLI::App* app, McmcFlags& m) {
  app->add_option("--chains", m.chains)->check(CLI::PositiveNumber);
  app->add_option("--burnin", m.burnin)->check(CLI::NonNegativeNumber);
  app->add_option("--iters", m.iters)->check(CLI::PositiveNumber);
  app->add_option("--rhat-max", m.rhat_max);
  app->add_option("--max-extensions", m.max_extensions)->check(CLI::NonNegativeNumber);
}

void apply(const PriorFlags& f, PriorConfig& p) {
  if (f.beta_var) p.beta_variance = *f.beta_var;
  if (f.informative) p.exposure_beta_variance = 1.38;
  if (f.gp_c) p.gp_c = *f.gp_c;
  if (f.gp_rate) p.gp_rate = *f.gp_rate;
  if (f.weibull_shape_rate) p.weibull_shape_prior_rate = *f.weibull_shape_rate;
  p.validate();
}

void apply(const McmcFlags& f, MCMCConfig& c) {
  if (f.chains) c.chains = *f.chains;
  if (f.burnin) c.burnin = *f.burnin;
  if (f.iters) c.iterations = *f.iters;
  if (f.rhat_max) c.rhat_threshold = *f.rhat_max;
  if (f.max_extensions) c.max_extensions = *f.max_extensions;
  c.validate();
}

/// The --seed value, or a fresh one from the OS that is echoed and recorded.
std::pair<std::uint64_t, std::string> resolve_seed(std::optional<std::uint64_t> flag,
                                                   std::optional<std::uint64_t> config, std::ostream& err) {
  if (flag) return {*flag, "flag"};
  if (config) return {*config, "config"};
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  err << "seed: " << s << " (entropy; pass --seed " << s << " to reproduce)\n";
  return {s, "entropy"};
}

/// Writes to --out when given, else to the command's output stream.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::vector<std::string> covariate_names(const MEDataset& d) {
  std::vector<std::string> names;
  for (const auto& c : d.z) names.push_back(c.name);
  return names;
}

struct FitRow {
  std::string method, parameter;
  double estimate;
  std::optional<Interval> interval;
};

std::vector<FitRow> fit_rows(const FitResult& f, const std::vector<std::string>& names) {
  std::vector<FitRow> rows;
  const auto add = [&](const std::string& p, double v) {
    const auto it = f.intervals.find(p);
    rows.push_back({to_string(f.method), p, v,
                    it == f.intervals.end() ? std::nullopt : std::optional<Interval>(it->second)});
  };
  for (const auto& [p, v] : coefficient_entries(f.estimates, names)) add(p, v);
  if (const auto* r = std::get_if<ResidualVariance>(&f.estimates.eta)) add("sigma2", r->sigma2);
  if (const auto* w = std::get_if<WeibullShape>(&f.estimates.eta)) add("shape", w->shape);
  if (const auto& m = f.estimates.measurement) {
    add("sigma2_XgZ", m->sigma2_XgZ);
    add("sigma2_U", m->sigma2_U);
    if (m->nu) add("nu", *m->nu);
  }
  return rows;
}

std::string fixed3(double v) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

std::string render_fits(const std::vector<FitResult>& fits, const std::vector<std::string>& names,
                        const std::string& format) {
  std::ostringstream out;
  if (format == "csv") {
    out << "method,parameter,estimate,lower,upper\n";
    for (const auto& f : fits)
      for (const auto& r : fit_rows(f, names))
        out << r.method << ',' << r.parameter << ',' << format_exact(r.estimate) << ','
            << (r.interval ? format_exact(r.interval->lower) : "") << ','
            << (r.interval ? format_exact(r.interval->upper) : "") << '\n';
    return out.str();
  }
  out << "| Method | Parameter | Estimate | 95% interval |\n|---|---|---|---|\n";
  for (const auto& f : fits)
    for (const auto& r : fit_rows(f, names))
      out << "| " << r.method << " | " << r.parameter << " | " << fixed3(r.estimate) << " | "
          << (r.interval ? "(" + fixed3(r.interval->lower) + ", " + fixed3(r.interval->upper) + ")" : "") << " |\n";
  return out.str();
}

void check_format(const std::string& f, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (f == a) return;
  throw InputError("unsupported --format '" + f + "'");
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  check_format(a.format, {"json", "csv", "md"});
  DatasetCsvOptions opts;
  opts.kind = parse_outcome_kind(a.model);
  opts.binary_with_missing.insert(a.binary.begin(), a.binary.end());
  const MEDataset d = read_dataset_file(a.data, opts);
  const OutcomeSpec spec{opts.kind, a.exam_shift};
  const auto violations = validate_dataset(d, spec);
  if (!violations.empty()) {
    err << "error: dataset '" << a.data << "' is invalid\n";
    for (const auto& v : violations) err << "  " << (v.row ? "row " + std::to_string(*v.row + 1) + ": " : "") << v.message << '\n';
    return kExitInput;
  }
  std::vector<Method> methods;
  for (const auto& m : a.methods.empty() ? std::vector<std::string>{"naive", "rc-efficient", "bayes"} : a.methods)
    methods.push_back(parse_method(m));

  PriorConfig priors;
  apply(a.priors, priors);
  MCMCConfig mcmc = MCMCConfig::defaults_for(opts.kind);
  apply(a.mcmc, mcmc);
  const auto [seed, seed_source] = resolve_seed(a.seed, std::nullopt, err);

  // Frequentist methods use complete cases; the Bayesian model imputes.
  const auto cc_rows = complete_case_rows(d, 1);
  const MEDataset cc = cc_rows.size() == d.n() ? d : d.subset(cc_rows);
  const auto names = covariate_names(d);

  std::vector<FitResult> fits;
  std::optional<McmcResult> bayes;
  for (Method m : methods) {
    switch (m) {
      case Method::Naive: fits.push_back(fit_naive(cc, spec, a.level)); break;
      case Method::RcSimple:
      case Method::RcEfficient: {
        const auto form = m == Method::RcSimple ? CalibrationForm::Simple : CalibrationForm::Efficient;
        if (a.boot_reps > 0) {
          BootstrapOptions b;
          b.replicates = a.boot_reps;
          b.seed = derive_seed(seed, 1);
          b.level = a.level;
          b.threads = a.threads;
          fits.push_back(bootstrap_rc(cc, spec, form, b).result);
        } else {
          fits.push_back(fit_rc(cc, spec, form));
        }
        break;
      }
      case Method::Bayes: {
        MCMCConfig c = mcmc;
        c.seed = derive_seed(seed, 2);
        c.threads = a.threads;
        c.keep_latent_x = !a.latent.empty();
        c.latent_thin = a.latent_thin;
        bayes = run_mcmc(d, spec, priors, c, a.level);
        fits.push_back(bayes->fit);
        if (!bayes->converged)
          err << "warning: Bayes chains did not reach Rhat < " << mcmc.rhat_threshold << " after "
              << bayes->extensions << " extensions; results are flagged converged=false\n";
        break;
      }
    }
  }
  if (bayes && !a.draws.empty()) {
    std::ofstream f(a.draws);
    if (!f) throw InputError("cannot write '" + a.draws + "'");
    write_draws_csv(f, *bayes);
  }
  if (bayes && !a.latent.empty()) {
    std::ofstream f(a.latent);
    if (!f) throw InputError("cannot write '" + a.latent + "'");
    write_latent_csv(f, *bayes);
  }

  if (a.format != "json") {
    emit(a.out, render_fits(fits, names, a.format), out);
    return kExitOk;
  }
  Json j;
  j["data"] = a.data;
  j["model"] = a.model;
  j["exam_shift"] = a.exam_shift;
  j["seed"] = seed;
  j["seed_source"] = seed_source;
  j["n"] = d.n();
  j["n_complete_cases"] = cc.n();
  Json arr = Json::array();
  for (const auto& f : fits) arr.push_back(fit_result_json(f, names));
  j["fits"] = std::move(arr);
  emit(a.out, j.dump(2) + "\n", out);
  return kExitOk;
}

Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_prior_json(const Json& j, PriorConfig& p) {
  for (const auto& [key, v] : j.items()) {
    if (key == "beta_variance") p.beta_variance = v.get<double>();
    else if (key == "exposure_beta_variance") p.exposure_beta_variance = v.get<double>();
    else if (key == "gamma_variance") p.gamma_variance = v.get<double>();
    else if (key == "precision_shape") p.precision_shape = v.get<double>();
    else if (key == "precision_rate") p.precision_rate = v.get<double>();
    else if (key == "gp_c") p.gp_c = v.get<double>();
    else if (key == "gp_rate") p.gp_rate = v.get<double>();
    else if (key == "weibull_shape_prior_rate") p.weibull_shape_prior_rate = v.get<double>();
    else if (key == "weibull_beta_transform") p.weibull_beta_transform = v.get<bool>();
    else if (key == "weibull_phi_variance") p.weibull_phi_variance = v.get<double>();
    else if (key == "nu_variance") p.nu_variance = v.get<double>();
    else if (key == "alpha_variance") p.alpha_variance = v.get<double>();
    else throw InputError("unknown prior setting '" + key + "'");
  }
}

void apply_mcmc_json(const Json& j, MCMCConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "chains") c.chains = v.get<int>();
    else if (key == "burnin") c.burnin = v.get<int>();
    else if (key == "iterations") c.iterations = v.get<int>();
    else if (key == "rhat_max") c.rhat_threshold = v.get<double>();
    else if (key == "max_extensions") c.max_extensions = v.get<int>();
    else if (key == "split_rhat") c.split_rhat = v.get<bool>();
    else throw InputError("unknown mcmc setting '" + key + "'");
  }
}

Json mcmc_json(const MCMCConfig& c) {
  return {{"chains", c.chains},           {"burnin", c.burnin},
          {"iterations", c.iterations},   {"rhat_max", c.rhat_threshold},
          {"max_extensions", c.max_extensions}, {"split_rhat", c.split_rhat}};
}

struct Cell {
  Scenario scenario;
  PriorConfig priors;
  MCMCConfig mcmc;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  check_format(a.format, {"json", "csv", "md", "latex"});
  const Json cfg = read_json_file(a.config);
  std::vector<Cell> cells;
  std::vector<Method> methods;
  int boot_reps = 0;
  std::optional<std::uint64_t> config_seed;
  std::string name;
  try {
    name = cfg.value("name", std::string("simulation"));
    if (cfg.contains("seed")) config_seed = cfg.at("seed").get<std::uint64_t>();
    for (const auto& m : cfg.value("methods", std::vector<std::string>{"rc-efficient", "bayes"}))
      methods.push_back(parse_method(m));
    boot_reps = cfg.value("boot_reps", 0);
    const Json scale = a.paper_scale && cfg.contains("paper_scale") ? cfg.at("paper_scale") : Json::object();
    for (const auto& sc : cfg.at("scenarios")) {
      const auto field = [&](const char* key) -> const Json* {
        if (sc.contains(key)) return &sc.at(key);
        if (scale.contains(key)) return &scale.at(key);
        if (cfg.contains(key)) return &cfg.at(key);
        return nullptr;
      };
      Cell c;
      const Json* kind = field("outcome");
      if (!kind) throw InputError("scenario without an outcome");
      c.scenario.kind = parse_outcome_kind(kind->get<std::string>());
      if (const Json* v = field("n")) c.scenario.n = v->get<std::size_t>();
      if (const Json* v = field("replication_fraction")) c.scenario.replication_fraction = v->get<double>();
      if (const Json* v = field("reps")) c.scenario.reps = v->get<int>();
      if (const Json* v = field("zero_error")) c.scenario.zero_error = v->get<bool>();
      c.scenario.reliability = sc.at("reliability").get<double>();
      c.scenario.effect = sc.at("effect").get<double>();
      c.priors = simulation_priors(c.scenario.kind);
      c.mcmc = MCMCConfig::defaults_for(c.scenario.kind);
      for (const Json* layer : {cfg.contains("mcmc") ? &cfg.at("mcmc") : nullptr,
                                scale.contains("mcmc") ? &scale.at("mcmc") : nullptr,
                                sc.contains("mcmc") ? &sc.at("mcmc") : nullptr})
        if (layer) apply_mcmc_json(*layer, c.mcmc);
      if (cfg.contains("priors")) apply_prior_json(cfg.at("priors"), c.priors);
      if (sc.contains("priors")) apply_prior_json(sc.at("priors"), c.priors);
      cells.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config '" + a.config + "': " + e.what());
  }
  if (!a.methods.empty()) {
    methods.clear();
    for (const auto& m : a.methods) methods.push_back(parse_method(m));
  }
  if (a.boot_reps) boot_reps = *a.boot_reps;
  for (auto& c : cells) {
    if (a.reps) c.scenario.reps = *a.reps;
    apply(a.priors, c.priors);
    apply(a.mcmc, c.mcmc);
    c.scenario.validate();
  }
  const auto [seed, seed_source] = resolve_seed(a.seed, config_seed, err);

  const auto start = std::chrono::steady_clock::now();
  Json results = Json::array();
  std::vector<ScenarioResult> rendered;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    auto& c = cells[k];
    c.scenario.seed = derive_seed(seed, k);
    RunOptions opt;
    opt.methods = methods;
    opt.mcmc = c.mcmc;
    opt.priors = c.priors;
    opt.boot_reps = boot_reps;
    opt.threads = a.threads;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_scenario(c.scenario, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "[" << k + 1 << "/" << cells.size() << "] " << to_string(c.scenario.kind)
        << " reliability=" << c.scenario.reliability << " effect=" << c.scenario.effect << " reps="
        << c.scenario.reps << " (" << std::fixed << std::setprecision(1) << secs << " s)\n"
        << std::defaultfloat;
    for (const auto& [m, s] : r.summary) {
      if (s.failed) err << "warning: " << to_string(m) << " failed on " << s.failed << " replicates\n";
      if (s.nonconverged)
        err << "warning: " << to_string(m) << " did not converge on " << s.nonconverged << " replicates\n";
    }
    Json j = to_json(r);
    j["mcmc"] = mcmc_json(c.mcmc);
    results.push_back(std::move(j));
    rendered.push_back(std::move(r));
  }

  if (a.format != "json") {
    emit(a.out, render_table(rendered, parse_table_format(a.format)), out);
    return kExitOk;
  }
  Json prov;
  prov["tool"] = "mecal";
  prov["version"] = kVersion;
  prov["config"] = name;
  prov["seed"] = seed;
  prov["seed_source"] = seed_source;
  Json ms = Json::array();
  for (Method m : methods) ms.push_back(to_string(m));
  prov["methods"] = std::move(ms);
  prov["boot_reps"] = boot_reps;
  prov["paper_scale"] = a.paper_scale;
  Json libs;
  for (const auto& [k, v] : library_versions()) libs[k] = v;
  prov["libraries"] = std::move(libs);
  prov["generated_at"] = utc_now();
  prov["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Json doc;
  doc["provenance"] = std::move(prov);
  doc["results"] = std::move(results);
  emit(a.out, doc.dump(2) + "\n", out);
  return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const auto format = parse_table_format(a.format);
  std::vector<ScenarioResult> rs;
  for (const auto& path : a.results) {
    const Json doc = read_json_file(path);
    if (!doc.is_object() || !doc.contains("results") || !doc.at("results").is_array())
      throw InputError("'" + path + "' has no results array");
    for (const auto& r : doc.at("results")) rs.push_back(scenario_result_from_json(r));
  }
  emit(a.out, render_table(rs, format, a.mcse), out);
  return kExitOk;
}

}  // namespace

Json fit_result_json(const FitResult& f, const std::vector<std::string>& names) {
  Json j;
  j["method"] = to_string(f.method);
  j["converged"] = f.converged;
  j["level"] = f.level;
  Json est;
  for (const auto& [p, v] : coefficient_entries(f.estimates, names)) est[p] = number_or_null(v);
  j["estimates"] = std::move(est);
  Json extra = Json::object();
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ResidualVariance>) extra["sigma2"] = number_or_null(e.sigma2);
        if constexpr (std::is_same_v<T, WeibullShape>) extra["shape"] = number_or_null(e.shape);
        if constexpr (std::is_same_v<T, HazardIncrements>) {
          extra["event_times"] = e.event_times;
          extra["hazard_increments"] = e.increments;
        }
      },
      f.estimates.eta);
  j["outcome_extras"] = std::move(extra);
  if (const auto& m = f.estimates.measurement) {
    Json mj;
    mj["gamma0"] = m->gamma0;
    mj["gammaZ"] = m->gammaZ;
    mj["sigma2_XgZ"] = m->sigma2_XgZ;
    mj["sigma2_U"] = m->sigma2_U;
    if (m->nu) mj["nu"] = *m->nu;
    j["measurement"] = std::move(mj);
  }
  Json iv = Json::object();
  for (const auto& [p, v] : f.intervals) iv[p] = {number_or_null(v.lower), number_or_null(v.upper)};
  j["intervals"] = std::move(iv);
  Json diag = Json::object();
  for (const auto& [k, v] : f.diagnostics) diag[k] = number_or_null(v);
  j["diagnostics"] = std::move(diag);
  return j;
}

Json strip_timing(Json results) {
  if (results.contains("provenance")) {
    results["provenance"].erase("generated_at");
    results["provenance"].erase("wall_time_seconds");
  }
  return results;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measurement-error correction: regression calibration and Bayesian analysis"};
  app.name("mecal");
  app.require_subcommand(1);
  unsigned threads = default_thread_count();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit outcome models to a CSV dataset");
  fit->add_option("--data", fa.data, "CSV with y or time,event; w1; optional w2; covariates")->required();
  fit->add_option("--model", fa.model)->check(CLI::IsMember({"linear", "logistic", "cox", "weibull"}));
  fit->add_option("--method", fa.methods, "naive, rc-simple, rc-efficient, bayes (repeatable)");
  fit->add_option("--binary", fa.binary, "Binary covariate that may be missing (repeatable)");
  fit->add_flag("--exam-shift", fa.exam_shift, "Second measurement carries a mean shift nu");
  fit->add_option("--level", fa.level)->check(CLI::Range(0.5, 0.999));
  fit->add_option("--boot-reps", fa.boot_reps, "Bootstrap replicates for RC intervals (0: none)");
  add_prior_flags(fit, fa.priors);
  add_mcmc_flags(fit, fa.mcmc);
  fit->add_option("--seed", fa.seed);
  fit->add_option("--threads", threads)->envname("MECAL_THREADS");
  fit->add_option("--out", fa.out);
  fit->add_option("--format", fa.format, "json, csv or md");
  fit->add_option("--draws", fa.draws, "Write posterior draws as CSV");
  fit->add_option("--latent", fa.latent, "Write latent exposure draws as CSV");
  fit->add_option("--latent-thin", fa.latent_thin)->check(CLI::PositiveNumber);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a scenario grid from a JSON config");
  sim->add_option("--config", sa.config)->required();
  sim->add_option("--method", sa.methods);
  sim->add_option("--reps", sa.reps)->check(CLI::PositiveNumber);
  sim->add_option("--boot-reps", sa.boot_reps)->check(CLI::NonNegativeNumber);
  sim->add_flag("--paper-scale", sa.paper_scale, "Use the config's paper_scale settings");
  add_prior_flags(sim, sa.priors);
  add_mcmc_flags(sim, sa.mcmc);
  sim->add_option("--seed", sa.seed);
  sim->add_option("--threads", threads)->envname("MECAL_THREADS");
  sim->add_option("--out", sa.out);
  sim->add_option("--format", sa.format, "json (default), md, csv or latex");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Render simulation results as a table");
  rep->add_option("--results", ra.results, "Result JSON from simulate (repeatable)")->required();
  rep->add_option("--format", ra.format, "md, csv or latex");
  rep->add_flag("--mcse", ra.mcse, "Add Monte-Carlo standard error columns");
  rep->add_option("--out", ra.out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (fit->parsed()) {
      fa.threads = threads;
      return cmd_fit(fa, out, err);
    }
    if (sim->parsed()) {
      sa.threads = threads;
      return cmd_simulate(sa, out, err);
    }
    return cmd_report(ra, out);
  } catch (const DatasetParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << '\n';
    return kExitFit;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace mecal
