#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "swinc/ops.hpp"

namespace swinc {

/// Input voxels that influence one output voxel.
struct InfluenceMap {
  Dims3 dims{};
  std::vector<bool> mask;  // D*H*W, row-major
  Index radius = 0;        // max Chebyshev distance from the source, -1 if empty

  bool at(Index d, Index h, Index w) const { return mask[static_cast<size_t>((d * dims[1] + h) * dims[2] + w)]; }
  Index count() const;
};

inline constexpr double kInfluenceThreshold = 1e-12;

/// Backpropagates the channel sum of output voxel `source` through
/// `fragment` (N=1 volume in, same-extent volume out) evaluated on a seeded
/// random input of shape `input_shape`; marks voxels whose gradient in any
/// channel exceeds the threshold.
InfluenceMap receptive_field_probe(const std::function<Tensor(const Tensor&)>& fragment, const Shape& input_shape,
                                   const Dims3& source, std::uint64_t seed = 0);

}  // namespace swinc
