#include "swinc/rng.hpp"

#include <cmath>

namespace swinc {

double Rng::trunc_normal(double stddev) {
  for (;;) {
    const double v = normal(0.0, stddev);
    if (std::abs(v) <= 2.0 * stddev) return v;
  }
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
  for (double& v : t.data()) v = uniform(lo, hi);
}

void Rng::fill_normal(Tensor& t, double mean, double stddev) {
  for (double& v : t.data()) v = normal(mean, stddev);
}

void Rng::fill_trunc_normal(Tensor& t, double stddev) {
  for (double& v : t.data()) v = trunc_normal(stddev);
}

}  // namespace swinc
