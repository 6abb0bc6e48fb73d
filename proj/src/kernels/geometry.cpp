#include "swinc/errors.hpp"
#include "swinc/kernels.hpp"

namespace swinc::kernels {

namespace {
Index conv_out(Index in, Index k, Index stride, Index pad) { return (in + 2 * pad - k) / stride + 1; }
}  // namespace

Conv3dGeom Conv3dGeom::make(Index n, Index cin, Index d, Index h, Index w, Index cout, Index k,
                            Index stride, Index pad, Index groups) {
  if (k < 1 || stride < 1 || pad < 0 || groups < 1) {
    throw ConfigError("conv3d needs k >= 1, stride >= 1, padding >= 0, groups >= 1 (got k=" +
                      std::to_string(k) + ", stride=" + std::to_string(stride) +
                      ", padding=" + std::to_string(pad) + ", groups=" + std::to_string(groups) + ")");
  }
  if (cin % groups != 0 || cout % groups != 0) {
    throw ConfigError("conv3d channels (" + std::to_string(cin) + " -> " + std::to_string(cout) +
                      ") not divisible by groups " + std::to_string(groups));
  }
  Conv3dGeom g;
  g.n = n;
  g.cin = cin;
  g.d = d;
  g.h = h;
  g.w = w;
  g.cout = cout;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  g.groups = groups;
  if (d + 2 * pad < k || h + 2 * pad < k || w + 2 * pad < k) {
    throw DimensionError("conv3d kernel " + std::to_string(k) + " larger than padded input " +
                         shape_str({d + 2 * pad, h + 2 * pad, w + 2 * pad}));
  }
  g.od = conv_out(d, k, stride, pad);
  g.oh = conv_out(h, k, stride, pad);
  g.ow = conv_out(w, k, stride, pad);
  return g;
}

PoolGeom PoolGeom::make(Index n, Index c, Index d, Index h, Index w, Index k, Index stride, Index pad) {
  if (k < 1 || stride < 1 || pad < 0 || pad >= k) {
    throw ConfigError("avg_pool3d needs k >= 1, stride >= 1, 0 <= padding < k");
  }
  PoolGeom g;
  g.n = n;
  g.c = c;
  g.d = d;
  g.h = h;
  g.w = w;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  if (d + 2 * pad < k || h + 2 * pad < k || w + 2 * pad < k) {
    throw DimensionError("avg_pool3d window larger than padded input");
  }
  g.od = conv_out(d, k, stride, pad);
  g.oh = conv_out(h, k, stride, pad);
  g.ow = conv_out(w, k, stride, pad);
  return g;
}

}  // namespace swinc::kernels
