#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swinc/params.hpp"

namespace swinc {

struct GradCheckOptions {
  double step = 1e-4;            // central-difference h
  Index max_coords = 200;        // sampled coordinates per tensor
  double tolerance = 1e-3;
  double denominator_floor = 1e-6;
  // When the error reaches refine_above * tolerance, retry with the step
  // divided by 10, 100, ... and keep the best. A wrong backward disagrees at
  // every step; a kink or curvature does not.
  int refinements = 3;
  double refine_above = 0.1;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  Index checked = 0;
  Index refined = 0;  // coordinates that matched only after a smaller step
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double max_rel_error() const;
  std::string summary() const;
};

/// Compares reverse-mode gradients of the scalar `loss` with central
/// differences for every tensor in `wrt` (each must require grad).
/// |a - n| / max(|a|, |n|, floor) per coordinate. Throws ContractError if
/// two evaluations of `loss` disagree.
GradCheckReport grad_check(const std::function<Tensor()>& loss, const ParamList& wrt, const GradCheckOptions& options = {});

}  // namespace swinc
