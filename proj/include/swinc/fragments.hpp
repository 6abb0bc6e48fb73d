#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swinc/gradcheck.hpp"
#include "swinc/probe.hpp"

namespace swinc {

/// A self-contained scalar function of its own inputs and parameters, for
/// gradient checking. Weighted output sums avoid symmetric cancellation.
struct GradFragment {
  std::string name;
  std::function<Tensor()> loss;
  ParamList wrt;
  GradCheckOptions options;
};

/// Every differentiable op, the composite blocks, and the full 32^3 model.
std::vector<std::string> grad_fragment_names();
GradFragment make_grad_fragment(const std::string& name, std::uint64_t seed);

/// Volume-to-volume fragments for receptive-field probing. Batch-norm
/// statistics are populated by one training pass, then evaluated frozen.
struct ProbeFragment {
  std::string name;
  std::function<Tensor(const Tensor&)> apply;
  Shape input_shape;
  Dims3 source{};
  Index window = 0;  // attention window edge, 0 for attention-free fragments
};

std::vector<std::string> probe_fragment_names();
ProbeFragment make_probe_fragment(const std::string& name, std::uint64_t seed);

}  // namespace swinc
