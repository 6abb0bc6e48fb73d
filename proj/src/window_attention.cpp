#include "swinc/window_attention.hpp"

#include <cmath>

#include "swinc/errors.hpp"

namespace swinc {

namespace {

Dims3 spatial_dims(const Tensor& v) {
  if (v.rank() != 5) throw DimensionError("expected an N x C x D x H x W volume, got " + shape_str(v.shape()));
  return {v.dim(2), v.dim(3), v.dim(4)};
}

Index positive_mod(Index a, Index m) { return ((a % m) + m) % m; }

}  // namespace

void WindowSpec::validate() const {
  if (window < 1) throw ConfigError("window size must be >= 1, got " + std::to_string(window));
  if (shift < 0 || shift >= window) {
    throw ConfigError("window shift must satisfy 0 <= shift < window, got shift " + std::to_string(shift) +
                      " for window " + std::to_string(window));
  }
}

Index WindowLayout::count() const {
  return (padded[0] / size[0]) * (padded[1] / size[1]) * (padded[2] / size[2]);
}

Index WindowLayout::tokens() const { return size[0] * size[1] * size[2]; }

WindowLayout plan_windows(const Dims3& dims, const WindowSpec& spec) {
  spec.validate();
  WindowLayout l;
  l.dims = dims;
  for (std::size_t a = 0; a < 3; ++a) {
    if (dims[a] <= spec.window) {
      l.size[a] = dims[a];
      l.shift[a] = 0;
    } else {
      l.size[a] = spec.window;
      l.shift[a] = spec.shift;
    }
    l.padded[a] = (dims[a] + l.size[a] - 1) / l.size[a] * l.size[a];
  }
  return l;
}

Tensor cyclic_shift(const Tensor& volume, const Dims3& shift, ShiftDirection direction) {
  const Dims3 d = spatial_dims(volume);
  if (shift[0] == 0 && shift[1] == 0 && shift[2] == 0) return volume;
  for (std::size_t a = 0; a < 3; ++a) {
    if (shift[a] < 0 || shift[a] >= d[a]) throw ConfigError("cyclic_shift: shift must lie in [0, extent)");
  }
  const Index sign = direction == ShiftDirection::forward ? 1 : -1;
  const Index nc = volume.dim(0) * volume.dim(1);
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(volume.numel()));
  std::size_t i = 0;
  for (Index p = 0; p < nc; ++p)
    for (Index z = 0; z < d[0]; ++z)
      for (Index y = 0; y < d[1]; ++y)
        for (Index x = 0; x < d[2]; ++x) {
          const Index sz = positive_mod(z + sign * shift[0], d[0]);
          const Index sy = positive_mod(y + sign * shift[1], d[1]);
          const Index sx = positive_mod(x + sign * shift[2], d[2]);
          (*index)[i++] = ((p * d[0] + sz) * d[1] + sy) * d[2] + sx;
        }
  return gather(volume, std::move(index), volume.shape());
}

Tensor window_partition(const Tensor& volume, const Dims3& window) {
  const Dims3 d = spatial_dims(volume);
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] < 1 || d[a] % window[a] != 0) {
      throw DimensionError("window_partition: extents " + shape_str({d[0], d[1], d[2]}) +
                           " are not multiples of window " + shape_str({window[0], window[1], window[2]}));
    }
  }
  const Index n = volume.dim(0), c = volume.dim(1);
  const Index nd = d[0] / window[0], nh = d[1] / window[1], nw = d[2] / window[2];
  const Index tokens = window[0] * window[1] * window[2];
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(volume.numel()));
  std::size_t i = 0;
  for (Index b = 0; b < n; ++b)
    for (Index wd = 0; wd < nd; ++wd)
      for (Index wh = 0; wh < nh; ++wh)
        for (Index ww = 0; ww < nw; ++ww)
          for (Index td = 0; td < window[0]; ++td)
            for (Index th = 0; th < window[1]; ++th)
              for (Index tw = 0; tw < window[2]; ++tw) {
                const Index z = wd * window[0] + td, y = wh * window[1] + th, x = ww * window[2] + tw;
                for (Index ch = 0; ch < c; ++ch) (*index)[i++] = (((b * c + ch) * d[0] + z) * d[1] + y) * d[2] + x;
              }
  return gather(volume, std::move(index), {n * nd * nh * nw, tokens, c});
}

Tensor window_partition(const Tensor& volume, Index window) { return window_partition(volume, Dims3{window, window, window}); }

Tensor window_reverse(const Tensor& windows, Index batch, const Dims3& dims, const Dims3& window) {
  if (windows.rank() != 3) throw DimensionError("window_reverse: expected windows x tokens x C, got " + shape_str(windows.shape()));
  const Index nd = dims[0] / window[0], nh = dims[1] / window[1], nw = dims[2] / window[2];
  const Index tokens = window[0] * window[1] * window[2];
  const Index c = windows.dim(2);
  if (nd * window[0] != dims[0] || nh * window[1] != dims[1] || nw * window[2] != dims[2] ||
      windows.dim(0) != batch * nd * nh * nw || windows.dim(1) != tokens) {
    throw DimensionError("window_reverse: " + shape_str(windows.shape()) + " does not tile " +
                         shape_str({batch, c, dims[0], dims[1], dims[2]}));
  }
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(windows.numel()));
  std::size_t i = 0;
  for (Index b = 0; b < batch; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index z = 0; z < dims[0]; ++z)
        for (Index y = 0; y < dims[1]; ++y)
          for (Index x = 0; x < dims[2]; ++x) {
            const Index win = ((b * nd + z / window[0]) * nh + y / window[1]) * nw + x / window[2];
            const Index tok = ((z % window[0]) * window[1] + y % window[1]) * window[2] + x % window[2];
            (*index)[i++] = (win * tokens + tok) * c + ch;
          }
  return gather(windows, std::move(index), {batch, c, dims[0], dims[1], dims[2]});
}

Tensor window_reverse(const Tensor& windows, Index batch, const Dims3& dims, Index window) {
  return window_reverse(windows, batch, dims, Dims3{window, window, window});
}

Tensor build_attention_mask(const WindowLayout& layout) {
  const Index nw = layout.count(), tokens = layout.tokens();
  Tensor mask = Tensor::zeros({nw, tokens, tokens});
  if (!layout.shifted()) return mask;
  // Swin-style region slices per axis: [0, P-w), [P-w, P-s), [P-s, P).
  auto region = [&](std::size_t axis, Index p) -> Index {
    const Index P = layout.padded[axis], w = layout.size[axis], s = layout.shift[axis];
    if (s == 0) return 0;
    if (p < P - w) return 0;
    if (p < P - s) return 1;
    return 2;
  };
  const Index nh = layout.padded[1] / layout.size[1], nww = layout.padded[2] / layout.size[2];
  std::vector<Index> labels(static_cast<std::size_t>(tokens));
  auto m = mask.data();
  for (Index win = 0; win < nw; ++win) {
    const Index wd = win / (nh * nww), wh = (win / nww) % nh, ww = win % nww;
    for (Index t = 0; t < tokens; ++t) {
      const Index td = t / (layout.size[1] * layout.size[2]);
      const Index th = (t / layout.size[2]) % layout.size[1];
      const Index tw = t % layout.size[2];
      labels[static_cast<std::size_t>(t)] = region(0, wd * layout.size[0] + td) * 9 +
                                            region(1, wh * layout.size[1] + th) * 3 +
                                            region(2, ww * layout.size[2] + tw);
    }
    for (Index i = 0; i < tokens; ++i)
      for (Index j = 0; j < tokens; ++j)
        if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) {
          m[(win * tokens + i) * tokens + j] = kMaskValue;
        }
  }
  return mask;
}

Tensor build_attention_mask(const Dims3& dims, const WindowSpec& spec) { return build_attention_mask(plan_windows(dims, spec)); }

std::shared_ptr<const std::vector<Index>> relative_position_index(const Dims3& window, Index table_window) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] < 1 || window[a] > table_window) throw ConfigError("relative_position_index: window exceeds bias table");
  }
  const Index m = 2 * table_window - 1;
  const Index tokens = window[0] * window[1] * window[2];
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(tokens * tokens));
  auto coords = [&](Index t) {
    return Dims3{t / (window[1] * window[2]), (t / window[2]) % window[1], t % window[2]};
  };
  for (Index i = 0; i < tokens; ++i) {
    const Dims3 a = coords(i);
    for (Index j = 0; j < tokens; ++j) {
      const Dims3 b = coords(j);
      (*index)[static_cast<std::size_t>(i * tokens + j)] =
          ((a[0] - b[0] + table_window - 1) * m + (a[1] - b[1] + table_window - 1)) * m + (a[2] - b[2] + table_window - 1);
    }
  }
  return index;
}

AttentionParams AttentionParams::make(Index channels, Index heads, Index window, bool use_rel_bias, Rng& rng) {
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError("attention: " + std::to_string(channels) + " channels not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (window < 1) throw ConfigError("attention: window must be >= 1");
  AttentionParams p;
  p.channels = channels;
  p.heads = heads;
  p.window = window;
  p.qkv_weight = Tensor::zeros({3 * channels, channels});
  p.qkv_bias = Tensor::zeros({3 * channels});
  p.proj_weight = Tensor::zeros({channels, channels});
  p.proj_bias = Tensor::zeros({channels});
  rng.fill_trunc_normal(p.qkv_weight, 0.02);
  rng.fill_trunc_normal(p.proj_weight, 0.02);
  if (use_rel_bias) {
    const Index m = 2 * window - 1;
    p.rel_bias_table = Tensor::zeros({m * m * m, heads});
    rng.fill_trunc_normal(p.rel_bias_table, 0.02);
  }
  return p;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({join_name(prefix, "qkv.weight"), qkv_weight});
  out.push_back({join_name(prefix, "qkv.bias"), qkv_bias});
  out.push_back({join_name(prefix, "proj.weight"), proj_weight});
  out.push_back({join_name(prefix, "proj.bias"), proj_bias});
  if (rel_bias_table.defined()) out.push_back({join_name(prefix, "rel_bias_table"), rel_bias_table});
}

Tensor relative_position_bias(const AttentionParams& params, const Dims3& window) {
  if (!params.rel_bias_table.defined()) throw ConfigError("relative_position_bias: bias table disabled");
  const auto rel = relative_position_index(window, params.window);
  const Index tokens = window[0] * window[1] * window[2];
  const Index h = params.heads;
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(h * tokens * tokens));
  for (Index head = 0; head < h; ++head)
    for (Index e = 0; e < tokens * tokens; ++e)
      (*index)[static_cast<std::size_t>(head * tokens * tokens + e)] = (*rel)[static_cast<std::size_t>(e)] * h + head;
  return gather(params.rel_bias_table, std::move(index), {h, tokens, tokens});
}

Tensor w_mhsa(const Tensor& volume, const AttentionParams& params, const WindowSpec& spec) {
  const Dims3 dims = spatial_dims(volume);
  if (volume.dim(1) != params.channels) {
    throw DimensionError("w_mhsa: input " + shape_str(volume.shape()) + " has " + std::to_string(volume.dim(1)) +
                         " channels, attention expects " + std::to_string(params.channels));
  }
  if (params.channels % params.heads != 0) throw ConfigError("w_mhsa: channels not divisible by heads");
  const WindowLayout layout = plan_windows(dims, spec);
  const Index n = volume.dim(0);

  Tensor x = pad_spatial(volume, layout.padded);
  if (layout.shifted()) x = cyclic_shift(x, layout.shift, ShiftDirection::forward);
  Tensor windows = window_partition(x, layout.size);
  Tensor qkv = linear(windows, params.qkv_weight, params.qkv_bias);
  Tensor bias = params.rel_bias_table.defined() ? relative_position_bias(params, layout.size) : Tensor{};
  Tensor mask = layout.shifted() ? build_attention_mask(layout) : Tensor{};
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(params.channels / params.heads));
  Tensor attended = window_attention(qkv, params.heads, bias, mask, scale_factor);
  Tensor projected = linear(attended, params.proj_weight, params.proj_bias);
  Tensor y = window_reverse(projected, n, layout.padded, layout.size);
  if (layout.shifted()) y = cyclic_shift(y, layout.shift, ShiftDirection::reverse);
  return crop_spatial(y, dims);
}

}  // namespace swinc
