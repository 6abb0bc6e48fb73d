#include "swinc/probe.hpp"

#include <algorithm>
#include <cmath>

#include "swinc/errors.hpp"
#include "swinc/rng.hpp"

namespace swinc {

Index InfluenceMap::count() const { return std::count(mask.begin(), mask.end(), true); }

InfluenceMap receptive_field_probe(const std::function<Tensor(const Tensor&)>& fragment, const Shape& input_shape,
                                   const Dims3& source, std::uint64_t seed) {
  if (input_shape.size() != 5 || input_shape[0] != 1) {
    throw DimensionError("probe: input must be 1 x C x D x H x W, got " + shape_str(input_shape));
  }
  const Dims3 dims{input_shape[2], input_shape[3], input_shape[4]};
  for (int a = 0; a < 3; ++a) {
    if (source[a] < 0 || source[a] >= dims[a]) throw DimensionError("probe: source voxel outside the volume");
  }
  Rng rng(seed);
  Tensor x(input_shape);
  rng.fill_normal(x, 0.0, 1.0);
  x.set_requires_grad(true);
  const Tensor y = fragment(x);
  if (y.rank() != 5 || y.dim(0) != 1 || y.dim(2) != dims[0] || y.dim(3) != dims[1] || y.dim(4) != dims[2]) {
    throw DimensionError("probe: fragment output " + shape_str(y.shape()) + " does not keep the input extents");
  }
  Tensor select(y.shape());
  const Index plane = dims[0] * dims[1] * dims[2];
  const Index src = (source[0] * dims[1] + source[1]) * dims[2] + source[2];
  for (Index c = 0; c < y.dim(1); ++c) select.data()[static_cast<size_t>(c * plane + src)] = 1.0;
  sum(mul(y, select)).backward();

  InfluenceMap m;
  m.dims = dims;
  m.mask.assign(static_cast<size_t>(plane), false);
  m.radius = -1;
  if (!x.has_grad()) return m;
  const auto g = std::as_const(x).grad();
  for (Index c = 0; c < input_shape[1]; ++c)
    for (Index v = 0; v < plane; ++v) {
      if (std::abs(g[static_cast<size_t>(c * plane + v)]) > kInfluenceThreshold) m.mask[static_cast<size_t>(v)] = true;
    }
  for (Index d = 0; d < dims[0]; ++d)
    for (Index h = 0; h < dims[1]; ++h)
      for (Index w = 0; w < dims[2]; ++w) {
        if (!m.at(d, h, w)) continue;
        const Index r = std::max({std::abs(d - source[0]), std::abs(h - source[1]), std::abs(w - source[2])});
        m.radius = std::max(m.radius, r);
      }
  return m;
}

}  // namespace swinc
