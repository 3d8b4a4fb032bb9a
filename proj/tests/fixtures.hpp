#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mecal/core_model.hpp"

namespace mecal::testing {

inline Covariate covariate(std::string name, std::vector<double> values) {
  Covariate c;
  c.name = std::move(name);
  c.present.assign(values.size(), 1);
  c.values = std::move(values);
  return c;
}

inline MEDataset linear_dataset(std::vector<double> y, std::vector<Measurements> w,
                                std::vector<Covariate> z = {}) {
  MEDataset d;
  d.outcome = ContinuousOutcome{std::move(y)};
  d.w = std::move(w);
  d.z = std::move(z);
  return d;
}

inline std::vector<Measurements> single_measurements(const std::vector<double>& w1) {
  std::vector<Measurements> out;
  for (double v : w1) out.push_back({v, std::nullopt});
  return out;
}

}  // namespace mecal::testing
