#include "swinc/data.hpp"

#include <algorithm>
#include <cmath>

#include "swinc/errors.hpp"

namespace swinc {

void SyntheticSpec::validate() const {
  if (edge < 1) throw ConfigError("data edge must be >= 1");
  if (num_classes < 2) throw ConfigError("data num_classes must be >= 2");
  if (min_radius <= 0.0 || max_radius < min_radius) throw ConfigError("data radius range must satisfy 0 < min <= max");
  if (2.0 * max_radius > static_cast<double>(edge)) {
    throw ConfigError("shape diameter " + std::to_string(2.0 * max_radius) + " exceeds volume edge " + std::to_string(edge));
  }
  if (min_shapes < num_classes - 1 || max_shapes < min_shapes) {
    throw ConfigError("shapes per volume must be at least num_classes - 1 = " + std::to_string(num_classes - 1));
  }
  if (!intensities.empty() && static_cast<Index>(intensities.size()) != num_classes) {
    throw ConfigError("data intensities must list one value per class");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
}

double SyntheticSpec::intensity(Index cls) const {
  return intensities.empty() ? static_cast<double>(cls) : intensities[static_cast<size_t>(cls)];
}

namespace {

template <typename Inside>
Index paint(Tensor& labels, const std::array<double, 3>& lo, const std::array<double, 3>& hi, Index cls, Inside inside) {
  const Index d = labels.dim(0), h = labels.dim(1), w = labels.dim(2);
  auto first = [](double v) { return std::max<Index>(0, static_cast<Index>(std::floor(v))); };
  auto last = [](double v, Index n) { return std::min<Index>(n - 1, static_cast<Index>(std::ceil(v))); };
  auto data = labels.data();
  Index painted = 0;
  for (Index z = first(lo[0]); z <= last(hi[0], d); ++z)
    for (Index y = first(lo[1]); y <= last(hi[1], h); ++y)
      for (Index x = first(lo[2]); x <= last(hi[2], w); ++x) {
        if (!inside(z + 0.5, y + 0.5, x + 0.5)) continue;
        data[static_cast<size_t>((z * h + y) * w + x)] = static_cast<double>(cls);
        ++painted;
      }
  return painted;
}

}  // namespace

Index paint_sphere(Tensor& labels, const std::array<double, 3>& c, double r, Index cls) {
  return paint(labels, {c[0] - r, c[1] - r, c[2] - r}, {c[0] + r, c[1] + r, c[2] + r}, cls,
               [&](double z, double y, double x) {
                 return (z - c[0]) * (z - c[0]) + (y - c[1]) * (y - c[1]) + (x - c[2]) * (x - c[2]) <= r * r;
               });
}

Index paint_box(Tensor& labels, const std::array<double, 3>& c, const std::array<double, 3>& half, Index cls) {
  return paint(labels, {c[0] - half[0], c[1] - half[1], c[2] - half[2]}, {c[0] + half[0], c[1] + half[1], c[2] + half[2]},
               cls, [&](double z, double y, double x) {
                 return std::abs(z - c[0]) <= half[0] && std::abs(y - c[1]) <= half[1] && std::abs(x - c[2]) <= half[2];
               });
}

std::vector<SegSample> gen_dataset(const SyntheticSpec& spec, Index count) {
  spec.validate();
  Rng rng(spec.seed);
  const Index e = spec.edge;
  const double edge = static_cast<double>(e);
  std::vector<SegSample> out;
  out.reserve(static_cast<size_t>(count));
  for (Index i = 0; i < count; ++i) {
    SegSample s{Tensor::zeros({1, e, e, e}), Tensor::zeros({e, e, e})};
    const Index shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
    for (Index k = 0; k < shapes; ++k) {
      const Index cls = k < spec.num_classes - 1 ? k + 1 : rng.uniform_int(1, spec.num_classes - 1);
      std::array<double, 3> half{};
      if (spec.kind_of(cls) == ShapeKind::sphere) {
        half.fill(rng.uniform(spec.min_radius, spec.max_radius));
      } else {
        for (double& h : half) h = rng.uniform(spec.min_radius, spec.max_radius);
      }
      std::array<double, 3> centre{};
      for (int a = 0; a < 3; ++a) centre[a] = rng.uniform(half[a], edge - half[a]);
      if (spec.kind_of(cls) == ShapeKind::sphere) {
        paint_sphere(s.labels, centre, half[0], cls);
      } else {
        paint_box(s.labels, centre, half, cls);
      }
    }
    auto vol = s.volume.data();
    auto lab = s.labels.data();
    for (size_t v = 0; v < vol.size(); ++v) {
      vol[v] = spec.intensity(static_cast<Index>(lab[v]));
      if (spec.noise_sigma > 0.0) vol[v] += rng.normal(0.0, spec.noise_sigma);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<SegSample>& samples, const std::vector<Index>& indices) {
  if (indices.empty()) throw DimensionError("make_batch: empty batch");
  const Shape& vs = samples.at(static_cast<size_t>(indices[0])).volume.shape();
  const Shape& ls = samples.at(static_cast<size_t>(indices[0])).labels.shape();
  const Index n = static_cast<Index>(indices.size());
  Shape vshape{n};
  vshape.insert(vshape.end(), vs.begin(), vs.end());
  Shape lshape{n};
  lshape.insert(lshape.end(), ls.begin(), ls.end());
  Tensor vol(vshape), lab(lshape);
  const Index vn = shape_numel(vs), ln = shape_numel(ls);
  for (Index b = 0; b < n; ++b) {
    const SegSample& s = samples.at(static_cast<size_t>(indices[static_cast<size_t>(b)]));
    if (s.volume.shape() != vs || s.labels.shape() != ls) throw DimensionError("make_batch: samples differ in shape");
    std::copy(s.volume.data().begin(), s.volume.data().end(), vol.data().begin() + b * vn);
    std::copy(s.labels.data().begin(), s.labels.data().end(), lab.data().begin() + b * ln);
  }
  return {vol, lab};
}

}  // namespace swinc
