#pragma once

// Raw numerical kernels over contiguous row-major buffers.
//
// Two implementations share every signature: `serial` is the plain loop
// nest kept as the reference, `parallel` is the OpenMP version the autodiff
// ops call. Both must agree to 1e-6 on every input; the unit tests and the
// benchmark target compare them directly.
//
// Backward kernels accumulate into their output buffers (`+=`), so callers
// can sum contributions from several paths without scratch copies.

#include <span>

#include "swinc/tensor.hpp"

namespace swinc::kernels {

/// Geometry of a grouped 3D cross-correlation, input N x Cin x D x H x W,
/// weight Cout x (Cin/groups) x k x k x k.
struct Conv3dGeom {
  Index n = 1, cin = 1, d = 1, h = 1, w = 1;
  Index cout = 1, k = 1, stride = 1, pad = 0, groups = 1;
  Index od = 1, oh = 1, ow = 1;

  // Validates and fills the output extents; throws DimensionError/ConfigError.
  static Conv3dGeom make(Index n, Index cin, Index d, Index h, Index w, Index cout, Index k,
                         Index stride, Index pad, Index groups = 1);
  Index in_size() const { return n * cin * d * h * w; }
  Index out_size() const { return n * cout * od * oh * ow; }
  Index weight_size() const { return cout * (cin / groups) * k * k * k; }
};

/// Average pooling; in-bounds voxels only in the divisor.
struct PoolGeom {
  Index n = 1, c = 1, d = 1, h = 1, w = 1;
  Index k = 3, stride = 1, pad = 1;
  Index od = 1, oh = 1, ow = 1;

  static PoolGeom make(Index n, Index c, Index d, Index h, Index w, Index k, Index stride, Index pad);
  Index in_size() const { return n * c * d * h * w; }
  Index out_size() const { return n * c * od * oh * ow; }
};

/// Windowed multi-head attention over packed qkv rows.
///
/// qkv is [windows, tokens, 3*channels] with channel index
/// which*channels + head*head_dim + j (which: 0 = q, 1 = k, 2 = v).
/// Optional bias is [heads, tokens, tokens]; optional mask is
/// [mask_windows, tokens, tokens] and window b uses mask b % mask_windows.
struct AttnGeom {
  Index windows = 1, tokens = 1, channels = 1, heads = 1;
  Index mask_windows = 0;
  double scale = 1.0;
  Index head_dim() const { return channels / heads; }
  Index probs_size() const { return windows * heads * tokens * tokens; }
};

#define SWINC_KERNEL_DECLS                                                                        \
  void conv3d_forward(const Conv3dGeom& g, std::span<const double> in,                           \
                      std::span<const double> weight, std::span<const double> bias,              \
                      std::span<double> out);                                                    \
  void conv3d_backward_input(const Conv3dGeom& g, std::span<const double> grad_out,              \
                             std::span<const double> weight, std::span<double> grad_in);         \
  void conv3d_backward_weight(const Conv3dGeom& g, std::span<const double> grad_out,             \
                              std::span<const double> in, std::span<double> grad_weight,         \
                              std::span<double> grad_bias);                                      \
  void avg_pool3d_forward(const PoolGeom& g, std::span<const double> in, std::span<double> out); \
  void avg_pool3d_backward(const PoolGeom& g, std::span<const double> grad_out,                  \
                           std::span<double> grad_in);                                           \
  void linear_forward(Index rows, Index din, Index dout, std::span<const double> x,              \
                      std::span<const double> weight, std::span<const double> bias,              \
                      std::span<double> out);                                                    \
  void linear_backward_input(Index rows, Index din, Index dout, std::span<const double> grad_out, \
                             std::span<const double> weight, std::span<double> grad_x);          \
  void linear_backward_weight(Index rows, Index din, Index dout,                                 \
                              std::span<const double> grad_out, std::span<const double> x,       \
                              std::span<double> grad_weight, std::span<double> grad_bias);       \
  void attention_forward(const AttnGeom& g, std::span<const double> qkv,                         \
                         std::span<const double> bias, std::span<const double> mask,             \
                         std::span<double> out, std::span<double> probs);                        \
  void attention_backward(const AttnGeom& g, std::span<const double> grad_out,                   \
                          std::span<const double> qkv, std::span<const double> probs,            \
                          std::span<double> grad_qkv, std::span<double> grad_bias);

namespace serial {
SWINC_KERNEL_DECLS
}  // namespace serial

namespace parallel {
SWINC_KERNEL_DECLS
}  // namespace parallel

#undef SWINC_KERNEL_DECLS

}  // namespace swinc::kernels
