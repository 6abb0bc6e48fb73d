#pragma once

#include <string>
#include <vector>

#include "swinc/tensor.hpp"

namespace swinc {

/// A named model tensor. Non-trainable entries are persistent buffers
/// (batch-norm running statistics): checkpointed, never optimized or counted.
struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

using ParamList = std::vector<NamedTensor>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

// Number of trainable scalars.
inline Index count_trainable(const ParamList& params) {
  Index n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.tensor.numel();
  }
  return n;
}

}  // namespace swinc
