#include "mecal/core_model.hpp"

#include <cmath>

#include "mecal/errors.hpp"

namespace mecal {

std::string to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::Linear: return "linear";
    case OutcomeKind::Logistic: return "logistic";
    case OutcomeKind::Cox: return "cox";
    case OutcomeKind::Weibull: return "weibull";
  }
  return "unknown";
}

OutcomeKind parse_outcome_kind(const std::string& s) {
  if (s == "linear") return OutcomeKind::Linear;
  if (s == "logistic") return OutcomeKind::Logistic;
  if (s == "cox") return OutcomeKind::Cox;
  if (s == "weibull") return OutcomeKind::Weibull;
  throw InputError("unknown model kind '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Naive: return "naive";
    case Method::RcSimple: return "rc-simple";
    case Method::RcEfficient: return "rc-efficient";
    case Method::Bayes: return "bayes";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "naive") return Method::Naive;
  if (s == "rc-simple") return Method::RcSimple;
  if (s == "rc-efficient" || s == "rc") return Method::RcEfficient;
  if (s == "bayes") return Method::Bayes;
  throw InputError("unknown method '" + s + "'");
}

double Measurements::mean(double shift) const {
  double sum = 0.0;
  int k = 0;
  if (w1) {
    sum += *w1;
    ++k;
  }
  if (w2) {
    sum += *w2 - shift;
    ++k;
  }
  return k == 0 ? 0.0 : sum / k;
}

bool Covariate::fully_observed() const {
  for (char c : present)
    if (!c) return false;
  return true;
}

MEDataset MEDataset::subset(const std::vector<std::size_t>& rows) const {
  MEDataset out;
  out.w.reserve(rows.size());
  for (auto r : rows) out.w.push_back(w[r]);
  out.z.reserve(z.size());
  for (const auto& col : z) {
    Covariate c{col.name, {}, {}, col.binary_with_missing};
    c.values.reserve(rows.size());
    c.present.reserve(rows.size());
    for (auto r : rows) {
      c.values.push_back(col.values[r]);
      c.present.push_back(col.present[r]);
    }
    out.z.push_back(std::move(c));
  }
  out.outcome = std::visit(
      [&](const auto& o) -> Outcome {
        using T = std::decay_t<decltype(o)>;
        T sub;
        if constexpr (std::is_same_v<T, SurvivalOutcome>) {
          for (auto r : rows) {
            sub.time.push_back(o.time[r]);
            sub.event.push_back(o.event[r]);
          }
        } else {
          for (auto r : rows) sub.y.push_back(o.y[r]);
        }
        return sub;
      },
      outcome);
  return out;
}

namespace {

std::string row_message(std::size_t row, const std::string& what) {
  return "row " + std::to_string(row) + ": " + what;
}

}  // namespace

std::vector<Violation> validate_dataset(const MEDataset& d, const OutcomeSpec& spec) {
  std::vector<Violation> out;
  const std::size_t n = d.w.size();

  const bool wants_continuous = spec.kind == OutcomeKind::Linear;
  const bool wants_binary = spec.kind == OutcomeKind::Logistic;
  const bool wants_survival = spec.is_survival();

  if (const auto* c = std::get_if<ContinuousOutcome>(&d.outcome)) {
    if (!wants_continuous)
      out.push_back({std::nullopt, "continuous outcome supplied for a " + to_string(spec.kind) + " model"});
    if (c->y.size() != n)
      out.push_back({std::nullopt, "outcome length " + std::to_string(c->y.size()) +
                                       " does not match measurement count " + std::to_string(n)});
    for (std::size_t i = 0; i < c->y.size(); ++i)
      if (!std::isfinite(c->y[i])) out.push_back({i, row_message(i, "outcome y is not finite")});
  } else if (const auto* b = std::get_if<BinaryOutcome>(&d.outcome)) {
    if (!wants_binary)
      out.push_back({std::nullopt, "binary outcome supplied for a " + to_string(spec.kind) + " model"});
    if (b->y.size() != n)
      out.push_back({std::nullopt, "outcome length " + std::to_string(b->y.size()) +
                                       " does not match measurement count " + std::to_string(n)});
    for (std::size_t i = 0; i < b->y.size(); ++i)
      if (b->y[i] != 0 && b->y[i] != 1)
        out.push_back({i, row_message(i, "binary outcome must be 0 or 1, got " + std::to_string(b->y[i]))});
  } else {
    const auto& s = std::get<SurvivalOutcome>(d.outcome);
    if (!wants_survival)
      out.push_back({std::nullopt, "survival outcome supplied for a " + to_string(spec.kind) + " model"});
    if (s.time.size() != n || s.event.size() != n)
      out.push_back({std::nullopt, "survival columns do not match measurement count " + std::to_string(n)});
    for (std::size_t i = 0; i < std::min(s.time.size(), s.event.size()); ++i) {
      if (!(s.time[i] > 0.0) || !std::isfinite(s.time[i]))
        out.push_back({i, row_message(i, "survival time must be positive and finite")});
      if (s.event[i] != 0 && s.event[i] != 1)
        out.push_back({i, row_message(i, "event indicator must be 0 or 1, got " + std::to_string(s.event[i]))});
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = d.w[i];
    if ((m.w1 && !std::isfinite(*m.w1)) || (m.w2 && !std::isfinite(*m.w2)))
      out.push_back({i, row_message(i, "measurement is not finite")});
  }

  for (const auto& col : d.z) {
    if (col.values.size() != n || col.present.size() != n) {
      out.push_back({std::nullopt, "covariate '" + col.name + "' has wrong length"});
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!col.observed(i)) {
        if (!col.binary_with_missing)
          out.push_back({i, row_message(i, "covariate '" + col.name + "' is missing but not declared binary-with-missingness")});
        continue;
      }
      if (!std::isfinite(col.values[i]))
        out.push_back({i, row_message(i, "covariate '" + col.name + "' is not finite")});
      else if (col.binary_with_missing && col.values[i] != 0.0 && col.values[i] != 1.0)
        out.push_back({i, row_message(i, "binary covariate '" + col.name + "' must be 0 or 1")});
    }
  }
  return out;
}

std::vector<std::size_t> complete_case_rows(const MEDataset& d, int min_measurements) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.n(); ++i) {
    bool ok = d.w[i].count() >= min_measurements;
    for (const auto& col : d.z) ok = ok && col.observed(i);
    if (ok) rows.push_back(i);
  }
  return rows;
}

std::vector<std::pair<std::string, double>> coefficient_entries(
    const ParamVector& p, const std::vector<std::string>& covariate_names) {
  std::vector<std::pair<std::string, double>> out;
  if (p.beta0) out.emplace_back("beta0", *p.beta0);
  out.emplace_back("betaX", p.betaX);
  for (std::size_t k = 0; k < p.betaZ.size(); ++k) {
    const std::string name = k < covariate_names.size() ? covariate_names[k] : "z" + std::to_string(k + 1);
    out.emplace_back("beta_" + name, p.betaZ[k]);
  }
  return out;
}

}  // namespace mecal
