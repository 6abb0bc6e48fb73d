#pragma once

#include <cstdint>
#include <random>

#include "swinc/tensor.hpp"

namespace swinc {

/// Seeded generator behind every random draw in the library: weight
/// initialization, synthetic data, gradient-check sampling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(gen_); }
  // Normal(0, stddev) redrawn until within two standard deviations.
  double trunc_normal(double stddev);
  Index uniform_int(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(gen_); }
  std::uint64_t next() { return gen_(); }

  void fill_uniform(Tensor& t, double lo, double hi);
  void fill_normal(Tensor& t, double mean, double stddev);
  void fill_trunc_normal(Tensor& t, double stddev);

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace swinc
