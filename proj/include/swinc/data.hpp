#pragma once

#include <cstdint>
#include <vector>

#include "swinc/ops.hpp"
#include "swinc/rng.hpp"

namespace swinc {

enum class ShapeKind { sphere, box };

/// Recipe for volumes of random spheres and boxes on a flat background.
/// Class 0 is background; classes 1..K-1 each own one shape kind and
/// intensity. Odd classes are spheres, even classes boxes.
struct SyntheticSpec {
  Index edge = 32;
  Index num_classes = 3;
  Index min_shapes = 2;
  Index max_shapes = 4;
  double min_radius = 4.0;  // sphere radius or box half-extent
  double max_radius = 8.0;
  std::vector<double> intensities;  // per class; empty means intensity c for class c
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  double intensity(Index cls) const;
  ShapeKind kind_of(Index cls) const { return cls % 2 == 1 ? ShapeKind::sphere : ShapeKind::box; }
};

struct SegSample {
  Tensor volume;  // [1, D, H, W]
  Tensor labels;  // [D, H, W], integral class ids
};

/// Writes `cls` into every voxel whose centre lies within the shape.
/// Returns the number of voxels painted.
Index paint_sphere(Tensor& labels, const std::array<double, 3>& centre, double radius, Index cls);
Index paint_box(Tensor& labels, const std::array<double, 3>& centre, const std::array<double, 3>& half, Index cls);

/// Deterministic in spec.seed. The first K-1 shapes of every volume cover
/// each foreground class once; later shapes draw classes at random.
std::vector<SegSample> gen_dataset(const SyntheticSpec& spec, Index count);

/// Stacks the samples at `indices` into [N, 1, D, H, W] and [N, D, H, W].
std::pair<Tensor, Tensor> make_batch(const std::vector<SegSample>& samples, const std::vector<Index>& indices);

}  // namespace swinc
