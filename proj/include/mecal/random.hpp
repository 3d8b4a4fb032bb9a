#pragma once

#include <cstdint>
#include <random>

namespace mecal {

/// Mixes a base seed with a stream index into an independent sub-seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Per-stream generator. Not shared between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  /// Gamma with the shape/rate parameterisation.
  double gamma(double shape, double rate) {
    using P = std::gamma_distribution<double>::param_type;
    return gamma_(engine_, P(shape, 1.0 / rate));
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    using P = std::uniform_int_distribution<std::size_t>::param_type;
    return index_(engine_, P(0, n - 1));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::gamma_distribution<double> gamma_;
  std::uniform_int_distribution<std::size_t> index_;
};

}  // namespace mecal
