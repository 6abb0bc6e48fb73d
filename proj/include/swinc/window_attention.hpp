#pragma once

// 3D (shifted-)window multi-head self-attention.

#include <memory>
#include <vector>

#include "swinc/ops.hpp"
#include "swinc/params.hpp"
#include "swinc/rng.hpp"

namespace swinc {

/// Cubic window edge and cyclic shift, both in voxels. 0 <= shift < window.
struct WindowSpec {
  Index window = 4;
  Index shift = 0;

  static WindowSpec regular(Index window) { return {window, 0}; }
  static WindowSpec shifted(Index window) { return {window, window / 2}; }
  void validate() const;
};

/// Per-axis windowing of one feature map. Axes no larger than the window
/// collapse to a single window covering the axis, with no shift; other
/// axes are padded up to a multiple of the window.
struct WindowLayout {
  Dims3 dims{};
  Dims3 padded{};
  Dims3 size{};
  Dims3 shift{};

  Index count() const;   // windows per sample
  Index tokens() const;  // voxels per window
  bool shifted() const { return shift[0] || shift[1] || shift[2]; }
};

WindowLayout plan_windows(const Dims3& dims, const WindowSpec& spec);

enum class ShiftDirection { forward, reverse };

/// Circular roll of the spatial axes of N x C x D x H x W: by -shift
/// (forward) or +shift (reverse).
Tensor cyclic_shift(const Tensor& volume, const Dims3& shift, ShiftDirection direction);

/// N x C x D x H x W -> (N*nw) x w^3 x C. Extents must be multiples of the window.
Tensor window_partition(const Tensor& volume, const Dims3& window);
Tensor window_partition(const Tensor& volume, Index window);

/// Inverse of window_partition.
Tensor window_reverse(const Tensor& windows, Index batch, const Dims3& dims, const Dims3& window);
Tensor window_reverse(const Tensor& windows, Index batch, const Dims3& dims, Index window);

/// [nw, T, T] additive mask: 0 where two tokens of a window come from the
/// same region of the unshifted map, kMaskValue otherwise.
Tensor build_attention_mask(const WindowLayout& layout);
Tensor build_attention_mask(const Dims3& dims, const WindowSpec& spec);

/// Flattened [T*T] lookup into a (2*table_window-1)^3 bias table for the
/// given (possibly clamped) window.
std::shared_ptr<const std::vector<Index>> relative_position_index(const Dims3& window, Index table_window);

struct AttentionParams {
  Index channels = 0;
  Index heads = 1;
  Index window = 4;  // sizes the bias table
  Tensor qkv_weight;  // [3C, C]
  Tensor qkv_bias;    // [3C]
  Tensor proj_weight;  // [C, C]
  Tensor proj_bias;    // [C]
  Tensor rel_bias_table;  // [(2w-1)^3, heads], undefined when disabled

  static AttentionParams make(Index channels, Index heads, Index window, bool use_rel_bias, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// bias[h, i, j] = table[rel_index[i, j], h] as a differentiable gather.
Tensor relative_position_bias(const AttentionParams& params, const Dims3& window);

/// pad -> shift -> partition -> attention (bias, mask) -> reverse -> unshift -> crop.
/// Shape-preserving on N x C x D x H x W.
Tensor w_mhsa(const Tensor& volume, const AttentionParams& params, const WindowSpec& spec);

}  // namespace swinc
