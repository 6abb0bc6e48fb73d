#include "swinc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "op_helpers.hpp"
#include "swinc/errors.hpp"
#include "swinc/kernels.hpp"

namespace swinc {

using detail::grad_of;
using detail::make_result;
using detail::TensorImpl;

namespace {

namespace kp = kernels::parallel;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

std::span<const double> maybe(const Tensor& t) {
  return t.defined() ? t.data() : std::span<const double>{};
}

std::span<double> span_of(double* p, Index n) { return p ? std::span<double>(p, static_cast<std::size_t>(n)) : std::span<double>{}; }

}  // namespace

// ---------------------------------------------------------------------------
// elementwise and reductions

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("add", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    for (auto* t : {&ai, &bi}) {
      if (double* g = grad_of(*t)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("sub", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (double* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result("mul", a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (double* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  auto ai = a.impl();
  return make_result("scale", a.shape(), std::move(out), {a}, [ai, factor](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += factor * o.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  const auto d = a.data();
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  auto ai = a.impl();
  return make_result("sum", Shape{1}, {s}, {a}, [ai](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < ai->data.size(); ++i) g[i] += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

// ---------------------------------------------------------------------------
// layout

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto ai = a.impl();
  return make_result("reshape", std::move(shape), std::move(out), {a}, [ai](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<Index>> index, Shape out_shape) {
  if (!index || static_cast<Index>(index->size()) != shape_numel(out_shape)) {
    throw DimensionError("gather: index map size does not match output shape " + shape_str(out_shape));
  }
  const auto src = a.data();
  const Index n = a.numel();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Index j = (*index)[i];
    if (j >= n) throw DimensionError("gather: index out of range for " + shape_str(a.shape()));
    out[i] = j < 0 ? 0.0 : src[static_cast<std::size_t>(j)];
  }
  auto ai = a.impl();
  return make_result("gather", std::move(out_shape), std::move(out), {a}, [ai, index](const TensorImpl& o) {
    if (double* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const Index j = (*index)[i];
        if (j >= 0) g[j] += o.grad[i];
      }
    }
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const Shape& s = a.shape();
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: axis list rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) throw DimensionError("permute: invalid axis list");
    seen[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<Index> in_stride(static_cast<std::size_t>(r));
  Index st = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_stride[static_cast<std::size_t>(i)] = st;
    st *= s[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(perm[i])];
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(a.numel()));
  std::vector<Index> counter(static_cast<std::size_t>(r), 0);
  for (Index flat = 0; flat < a.numel(); ++flat) {
    Index src = 0;
    for (int i = 0; i < r; ++i) src += counter[static_cast<std::size_t>(i)] * in_stride[static_cast<std::size_t>(perm[i])];
    (*index)[static_cast<std::size_t>(flat)] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++counter[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
      counter[static_cast<std::size_t>(i)] = 0;
    }
  }
  return gather(a, std::move(index), std::move(out_shape));
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  const int r = static_cast<int>(first.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("concat: axis out of range");
  Index outer = 1, inner = 1, total = 0;
  for (int i = 0; i < axis; ++i) outer *= first[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= first[static_cast<std::size_t>(i)];
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = static_cast<int>(s.size()) == r;
    for (int i = 0; ok && i < r; ++i) ok = i == axis || s[static_cast<std::size_t>(i)] == first[static_cast<std::size_t>(i)];
    if (!ok) throw DimensionError("concat: shapes " + shape_str(first) + " and " + shape_str(s) + " disagree");
    total += s[static_cast<std::size_t>(axis)];
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = total;
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<Index> offsets;
  Index off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const Index len = p.dim(axis) * inner;
    const auto src = p.data();
    for (Index o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * len, len, out.begin() + o * total * inner + off * inner);
    }
    off += p.dim(axis);
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  for (const Tensor& p : parts) impls.push_back(p.impl());
  return make_result("concat", std::move(out_shape), std::move(out), inputs,
                     [impls, offsets, outer, inner, total, axis](const TensorImpl& o) {
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         double* g = grad_of(impls[k]);
                         if (!g) continue;
                         const Index len = impls[k]->shape[static_cast<std::size_t>(axis)] * inner;
                         for (Index r2 = 0; r2 < outer; ++r2) {
                           const double* src = o.grad.data() + r2 * total * inner + offsets[k] * inner;
                           for (Index t = 0; t < len; ++t) g[r2 * len + t] += src[t];
                         }
                       }
                     });
}

Tensor to_tokens(const Tensor& volume) {
  require_rank("to_tokens", volume, 5);
  const Shape& s = volume.shape();
  Tensor t = permute(volume, {0, 2, 3, 4, 1});
  return reshape(t, {s[0], s[2] * s[3] * s[4], s[1]});
}

Tensor to_volume(const Tensor& tokens, const Dims3& dims) {
  require_rank("to_volume", tokens, 3);
  if (tokens.dim(1) != dims[0] * dims[1] * dims[2]) {
    throw DimensionError("to_volume: token count " + std::to_string(tokens.dim(1)) + " != D*H*W for dims " +
                         shape_str({dims[0], dims[1], dims[2]}));
  }
  Tensor v = reshape(tokens, {tokens.dim(0), dims[0], dims[1], dims[2], tokens.dim(2)});
  return permute(v, {0, 4, 1, 2, 3});
}

namespace {
Tensor resize_spatial(const Tensor& x, const Dims3& target, const char* op) {
  require_rank(op, x, 5);
  const Shape& s = x.shape();
  const Index N = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
  if (target[0] == D && target[1] == H && target[2] == W) return x;
  auto index = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(N * C * target[0] * target[1] * target[2]));
  std::size_t i = 0;
  for (Index nc = 0; nc < N * C; ++nc)
    for (Index d = 0; d < target[0]; ++d)
      for (Index h = 0; h < target[1]; ++h)
        for (Index w = 0; w < target[2]; ++w)
          (*index)[i++] = (d < D && h < H && w < W) ? ((nc * D + d) * H + h) * W + w : -1;
  return gather(x, std::move(index), {N, C, target[0], target[1], target[2]});
}
}  // namespace

Tensor pad_spatial(const Tensor& volume, const Dims3& padded) {
  require_rank("pad_spatial", volume, 5);
  for (int a = 0; a < 3; ++a) {
    if (padded[static_cast<std::size_t>(a)] < volume.dim(2 + a)) throw DimensionError("pad_spatial: target smaller than input");
  }
  return resize_spatial(volume, padded, "pad_spatial");
}

Tensor crop_spatial(const Tensor& volume, const Dims3& cropped) {
  require_rank("crop_spatial", volume, 5);
  for (int a = 0; a < 3; ++a) {
    if (cropped[static_cast<std::size_t>(a)] > volume.dim(2 + a) || cropped[static_cast<std::size_t>(a)] < 1) {
      throw DimensionError("crop_spatial: target larger than input");
    }
  }
  return resize_spatial(volume, cropped, "crop_spatial");
}

// ---------------------------------------------------------------------------
// convolution, pooling, linear

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Index stride, Index padding,
              Index groups) {
  require_rank("conv3d input", input, 5);
  require_rank("conv3d weight", weight, 5);
  const Shape& s = input.shape();
  const Shape& ws = weight.shape();
  if (ws[2] != ws[3] || ws[2] != ws[4]) throw ConfigError("conv3d: only cubic kernels are supported");
  if (groups < 1 || ws[1] * groups != s[1]) {
    throw DimensionError("conv3d: weight " + shape_str(ws) + " does not match input " + shape_str(s) +
                         " with groups " + std::to_string(groups));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != ws[0])) {
    throw DimensionError("conv3d: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(ws));
  }
  const auto g = kernels::Conv3dGeom::make(s[0], s[1], s[2], s[3], s[4], ws[0], ws[2], stride, padding, groups);
  std::vector<double> out(static_cast<std::size_t>(g.out_size()));
  kp::conv3d_forward(g, input.data(), weight.data(), maybe(bias), out);
  auto xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_result("conv3d", {g.n, g.cout, g.od, g.oh, g.ow}, std::move(out), {input, weight, bias},
                     [g, xi, wi, bi](const TensorImpl& o) {
                       if (double* gx = grad_of(xi)) kp::conv3d_backward_input(g, o.grad, wi->data, span_of(gx, g.in_size()));
                       double* gw = grad_of(wi);
                       double* gb = grad_of(bi);
                       if (gw || gb) {
                         // The weight kernel always needs a destination; route to scratch if frozen.
                         std::vector<double> scratch;
                         if (!gw) {
                           scratch.assign(static_cast<std::size_t>(g.weight_size()), 0.0);
                           gw = scratch.data();
                         }
                         kp::conv3d_backward_weight(g, o.grad, xi->data, span_of(gw, g.weight_size()), span_of(gb, g.cout));
                       }
                     });
}

Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias, Index stride) {
  require_rank("conv_transpose3d input", input, 5);
  require_rank("conv_transpose3d weight", weight, 5);
  const Shape& s = input.shape();
  const Shape& ws = weight.shape();
  const Index k = ws[2];
  if (ws[2] != ws[3] || ws[2] != ws[4]) throw ConfigError("conv_transpose3d: only cubic kernels are supported");
  if (stride < 1 || k < stride) {
    throw ConfigError("conv_transpose3d: unsupported kernel " + std::to_string(k) + " with stride " +
                      std::to_string(stride) + " (need k >= stride >= 1)");
  }
  if (ws[0] != s[1]) {
    throw DimensionError("conv_transpose3d: weight " + shape_str(ws) + " does not match input " + shape_str(s));
  }
  const Index cout = ws[1];
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv_transpose3d: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(ws));
  }
  const Index od = (s[2] - 1) * stride + k, oh = (s[3] - 1) * stride + k, ow = (s[4] - 1) * stride + k;
  // The adjoint conv maps the (larger) output back onto the input.
  const auto g = kernels::Conv3dGeom::make(s[0], cout, od, oh, ow, s[1], k, stride, 0);
  std::vector<double> out(static_cast<std::size_t>(g.in_size()), 0.0);
  kp::conv3d_backward_input(g, input.data(), weight.data(), out);
  if (bias.defined()) {
    const Index plane = od * oh * ow;
    const auto b = bias.data();
    for (Index n = 0; n < s[0]; ++n)
      for (Index c = 0; c < cout; ++c)
        for (Index t = 0; t < plane; ++t) out[static_cast<std::size_t>((n * cout + c) * plane + t)] += b[c];
  }
  auto xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_result("conv_transpose3d", {s[0], cout, od, oh, ow}, std::move(out), {input, weight, bias},
                     [g, xi, wi, bi, cout](const TensorImpl& o) {
                       if (double* gx = grad_of(xi)) {
                         std::vector<double> tmp(static_cast<std::size_t>(g.out_size()));
                         kp::conv3d_forward(g, o.grad, wi->data, {}, tmp);
                         for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
                       }
                       if (double* gw = grad_of(wi)) {
                         kp::conv3d_backward_weight(g, xi->data, o.grad, span_of(gw, g.weight_size()), {});
                       }
                       if (double* gb = grad_of(bi)) {
                         const Index plane = g.d * g.h * g.w;
                         for (Index n = 0; n < g.n; ++n)
                           for (Index c = 0; c < cout; ++c)
                             for (Index t = 0; t < plane; ++t) gb[c] += o.grad[static_cast<std::size_t>((n * cout + c) * plane + t)];
                       }
                     });
}

Tensor avg_pool3d(const Tensor& input, Index k, Index stride, Index padding) {
  require_rank("avg_pool3d", input, 5);
  const Shape& s = input.shape();
  const auto g = kernels::PoolGeom::make(s[0], s[1], s[2], s[3], s[4], k, stride, padding);
  std::vector<double> out(static_cast<std::size_t>(g.out_size()));
  kp::avg_pool3d_forward(g, input.data(), out);
  auto xi = input.impl();
  return make_result("avg_pool3d", {g.n, g.c, g.od, g.oh, g.ow}, std::move(out), {input}, [g, xi](const TensorImpl& o) {
    if (double* gx = grad_of(xi)) kp::avg_pool3d_backward(g, o.grad, span_of(gx, g.in_size()));
  });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank("linear weight", weight, 2);
  const Index din = weight.dim(1), dout = weight.dim(0);
  if (input.dim(-1) != din) {
    throw DimensionError("linear: input " + shape_str(input.shape()) + " last extent does not match weight " +
                         shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  const Index rows = input.numel() / din;
  Shape out_shape = input.shape();
  out_shape.back() = dout;
  std::vector<double> out(static_cast<std::size_t>(rows * dout));
  kp::linear_forward(rows, din, dout, input.data(), weight.data(), maybe(bias), out);
  auto xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_result("linear", std::move(out_shape), std::move(out), {input, weight, bias},
                     [rows, din, dout, xi, wi, bi](const TensorImpl& o) {
                       if (double* gx = grad_of(xi)) kp::linear_backward_input(rows, din, dout, o.grad, wi->data, span_of(gx, rows * din));
                       double* gw = grad_of(wi);
                       double* gb = grad_of(bi);
                       if (gw || gb) {
                         std::vector<double> scratch;
                         if (!gw) {
                           scratch.assign(static_cast<std::size_t>(din * dout), 0.0);
                           gw = scratch.data();
                         }
                         kp::linear_backward_weight(rows, din, dout, o.grad, xi->data, span_of(gw, din * dout), span_of(gb, dout));
                       }
                     });
}

// ---------------------------------------------------------------------------
// normalization

namespace {

// Normalization over groups of elements. `flat(g, e)` maps element e of
// group g to a storage offset; `affine(g, e)` picks the gamma/beta entry.
// With `fixed_mean`/`fixed_invstd` given, statistics are constants (eval
// batch norm) and the backward skips the statistic terms.
struct NormPlan {
  Index groups = 0, size = 0;
};

template <class Flat, class Affine>
Tensor normalize_groups(const char* op, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        NormPlan plan, Flat flat, Affine affine, const std::vector<double>* fixed_mean,
                        const std::vector<double>* fixed_var, std::vector<double>* batch_mean_out,
                        std::vector<double>* batch_var_out) {
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(plan.groups));
  std::vector<double> out(xd.size());
  const bool fixed = fixed_mean != nullptr;
#pragma omp parallel for schedule(static)
  for (Index g = 0; g < plan.groups; ++g) {
    double mu, var;
    if (fixed) {
      mu = (*fixed_mean)[static_cast<std::size_t>(g)];
      var = (*fixed_var)[static_cast<std::size_t>(g)];
    } else {
      double s = 0.0;
      for (Index e = 0; e < plan.size; ++e) s += xd[static_cast<std::size_t>(flat(g, e))];
      mu = s / static_cast<double>(plan.size);
      double ss = 0.0;
      for (Index e = 0; e < plan.size; ++e) {
        const double dv = xd[static_cast<std::size_t>(flat(g, e))] - mu;
        ss += dv * dv;
      }
      var = ss / static_cast<double>(plan.size);
      if (batch_mean_out) (*batch_mean_out)[static_cast<std::size_t>(g)] = mu;
      if (batch_var_out) (*batch_var_out)[static_cast<std::size_t>(g)] = var;
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(g)] = is;
    for (Index e = 0; e < plan.size; ++e) {
      const auto f = static_cast<std::size_t>(flat(g, e));
      const Index a = affine(g, e);
      const double xh = (xd[f] - mu) * is;
      (*xhat)[f] = xh;
      out[f] = gd[a] * xh + bd[a];
    }
  }
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result(op, x.shape(), std::move(out), {x, gamma, beta},
                     [=](const TensorImpl& o) {
                       const double* gy = o.grad.data();
                       double* gg = grad_of(gi);
                       double* gb = grad_of(bi);
                       if (gg || gb) {
                         // gamma/beta entries can be shared across groups; accumulate serially.
                         for (Index g = 0; g < plan.groups; ++g) {
                           for (Index e = 0; e < plan.size; ++e) {
                             const auto f = static_cast<std::size_t>(flat(g, e));
                             const Index a = affine(g, e);
                             if (gg) gg[a] += gy[f] * (*xhat)[f];
                             if (gb) gb[a] += gy[f];
                           }
                         }
                       }
                       double* gx = grad_of(xi);
                       if (!gx) return;
                       const double* gam = gi->data.data();
#pragma omp parallel for schedule(static)
                       for (Index g = 0; g < plan.groups; ++g) {
                         const double is = (*invstd)[static_cast<std::size_t>(g)];
                         if (fixed) {
                           for (Index e = 0; e < plan.size; ++e) {
                             const auto f = static_cast<std::size_t>(flat(g, e));
                             gx[f] += gy[f] * gam[affine(g, e)] * is;
                           }
                           continue;
                         }
                         double m1 = 0.0, m2 = 0.0;
                         for (Index e = 0; e < plan.size; ++e) {
                           const auto f = static_cast<std::size_t>(flat(g, e));
                           const double dxh = gy[f] * gam[affine(g, e)];
                           m1 += dxh;
                           m2 += dxh * (*xhat)[f];
                         }
                         m1 /= static_cast<double>(plan.size);
                         m2 /= static_cast<double>(plan.size);
                         for (Index e = 0; e < plan.size; ++e) {
                           const auto f = static_cast<std::size_t>(flat(g, e));
                           const double dxh = gy[f] * gam[affine(g, e)];
                           gx[f] += is * (dxh - m1 - (*xhat)[f] * m2);
                         }
                       }
                     });
}

void require_affine(const char* op, const Tensor& gamma, const Tensor& beta, Index channels) {
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != channels || beta.dim(0) != channels) {
    throw DimensionError(std::string(op) + ": affine parameters " + shape_str(gamma.shape()) + ", " +
                         shape_str(beta.shape()) + " do not match " + std::to_string(channels) + " channels");
  }
}

}  // namespace

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index c = input.dim(-1);
  require_affine("layer_norm", gamma, beta, c);
  NormPlan plan{input.numel() / c, c};
  return normalize_groups(
      "layer_norm", input, gamma, beta, eps, plan, [c](Index g, Index e) { return g * c + e; },
      [](Index, Index e) { return e; }, nullptr, nullptr, nullptr, nullptr);
}

BatchNormStats BatchNormStats::make(Index channels) {
  return {Tensor::zeros({channels}), Tensor::ones({channels}), Tensor::zeros({1})};
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool training,
                  double eps, double momentum) {
  if (input.rank() < 2) throw DimensionError("batch_norm: input needs a channel axis, got " + shape_str(input.shape()));
  const Index n = input.dim(0), c = input.dim(1);
  const Index spatial = input.numel() / (n * c);
  require_affine("batch_norm", gamma, beta, c);
  if (stats.running_mean.numel() != c || stats.running_var.numel() != c) {
    throw StateError("batch_norm: running statistics sized for " + std::to_string(stats.running_mean.numel()) +
                     " channels, input has " + std::to_string(c));
  }
  NormPlan plan{c, n * spatial};
  auto flat = [c, spatial](Index g, Index e) { return (e / spatial) * c * spatial + g * spatial + e % spatial; };
  auto affine = [](Index g, Index) { return g; };
  if (!training) {
    if (!stats.populated()) throw StateError("batch_norm: eval mode without populated running statistics");
    std::vector<double> rm(stats.running_mean.data().begin(), stats.running_mean.data().end());
    std::vector<double> rv(stats.running_var.data().begin(), stats.running_var.data().end());
    return normalize_groups("batch_norm", input, gamma, beta, eps, plan, flat, affine, &rm, &rv, nullptr, nullptr);
  }
  if (plan.size < 2) throw DimensionError("batch_norm: training needs more than one value per channel");
  std::vector<double> bm(static_cast<std::size_t>(c)), bv(static_cast<std::size_t>(c));
  Tensor out = normalize_groups("batch_norm", input, gamma, beta, eps, plan, flat, affine, nullptr, nullptr, &bm, &bv);
  auto rm = stats.running_mean.data();
  auto rv = stats.running_var.data();
  const double unbias = static_cast<double>(plan.size) / static_cast<double>(plan.size - 1);
  for (Index ch = 0; ch < c; ++ch) {
    rm[ch] = (1.0 - momentum) * rm[ch] + momentum * bm[static_cast<std::size_t>(ch)];
    rv[ch] = (1.0 - momentum) * rv[ch] + momentum * bv[static_cast<std::size_t>(ch)] * unbias;
  }
  stats.batches_tracked.data()[0] += 1.0;
  return out;
}

Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  if (input.rank() < 3) throw DimensionError("instance_norm: input needs spatial axes, got " + shape_str(input.shape()));
  const Index n = input.dim(0), c = input.dim(1);
  const Index spatial = input.numel() / (n * c);
  require_affine("instance_norm", gamma, beta, c);
  NormPlan plan{n * c, spatial};
  return normalize_groups(
      "instance_norm", input, gamma, beta, eps, plan, [spatial](Index g, Index e) { return g * spatial + e; },
      [c](Index g, Index) { return g % c; }, nullptr, nullptr, nullptr, nullptr);
}

// ---------------------------------------------------------------------------
// activations

Tensor gelu(const Tensor& input) {
  const auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  auto xi = input.impl();
  return make_result("gelu", input.shape(), std::move(out), {input}, [xi](const TensorImpl& o) {
    double* g = grad_of(xi);
    if (!g) return;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor prelu(const Tensor& input, const Tensor& slope) {
  if (input.rank() < 2) throw DimensionError("prelu: input needs a channel axis");
  const Index n = input.dim(0), c = input.dim(1);
  const Index spatial = input.numel() / (n * c);
  if (slope.rank() != 1 || (slope.dim(0) != c && slope.dim(0) != 1)) {
    throw DimensionError("prelu: slope " + shape_str(slope.shape()) + " does not match " + std::to_string(c) + " channels");
  }
  const bool shared = slope.dim(0) == 1;
  const auto x = input.data();
  const auto a = slope.data();
  std::vector<double> out(x.size());
  for (Index i = 0; i < input.numel(); ++i) {
    const Index ch = shared ? 0 : (i / spatial) % c;
    out[static_cast<std::size_t>(i)] = x[i] >= 0.0 ? x[i] : a[ch] * x[i];
  }
  auto xi = input.impl(), ai = slope.impl();
  return make_result("prelu", input.shape(), std::move(out), {input, slope},
                     [xi, ai, shared, spatial, c](const TensorImpl& o) {
                       double* gx = grad_of(xi);
                       double* ga = grad_of(ai);
                       for (std::size_t i = 0; i < o.grad.size(); ++i) {
                         const Index ch = shared ? 0 : (static_cast<Index>(i) / spatial) % c;
                         const double v = xi->data[i];
                         if (gx) gx[i] += o.grad[i] * (v >= 0.0 ? 1.0 : ai->data[static_cast<std::size_t>(ch)]);
                         if (ga && v < 0.0) ga[ch] += o.grad[i] * v;
                       }
                     });
}

Tensor softmax(const Tensor& input, const Tensor& mask) {
  const Index len = input.dim(-1);
  const Index rows = input.numel() / len;
  Index mask_rows = 0;
  if (mask.defined()) {
    const Shape& s = input.shape();
    const Shape& ms = mask.shape();
    if (ms.size() > s.size() || !std::equal(ms.rbegin(), ms.rend(), s.rbegin())) {
      throw DimensionError("softmax: mask " + shape_str(ms) + " is not a trailing shape of " + shape_str(s));
    }
    mask_rows = mask.numel() / len;
  }
  const auto x = input.data();
  std::vector<double> out(x.size());
  for (Index r = 0; r < rows; ++r) {
    const double* m = mask_rows ? mask.data().data() + (r % mask_rows) * len : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < len; ++j) {
      const double v = x[r * len + j] + (m ? m[j] : 0.0);
      out[static_cast<std::size_t>(r * len + j)] = v;
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (Index j = 0; j < len; ++j) {
      double& v = out[static_cast<std::size_t>(r * len + j)];
      v = std::exp(v - mx);
      z += v;
    }
    for (Index j = 0; j < len; ++j) out[static_cast<std::size_t>(r * len + j)] /= z;
  }
  auto xi = input.impl();
  auto y = std::make_shared<std::vector<double>>(out);
  return make_result("softmax", input.shape(), std::move(out), {input}, [xi, y, rows, len](const TensorImpl& o) {
    double* g = grad_of(xi);
    if (!g) return;
    for (Index r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (Index j = 0; j < len; ++j) dot += o.grad[static_cast<std::size_t>(r * len + j)] * (*y)[static_cast<std::size_t>(r * len + j)];
      for (Index j = 0; j < len; ++j) {
        const auto f = static_cast<std::size_t>(r * len + j);
        g[f] += (*y)[f] * (o.grad[f] - dot);
      }
    }
  });
}

Tensor window_attention(const Tensor& qkv, Index heads, const Tensor& bias, const Tensor& mask, double scale_factor) {
  require_rank("window_attention qkv", qkv, 3);
  const Index windows = qkv.dim(0), tokens = qkv.dim(1);
  if (qkv.dim(2) % 3 != 0) throw DimensionError("window_attention: packed qkv extent not divisible by 3");
  const Index channels = qkv.dim(2) / 3;
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError("window_attention: " + std::to_string(channels) + " channels not divisible by " +
                      std::to_string(heads) + " heads");
  }
  kernels::AttnGeom g{windows, tokens, channels, heads, 0, scale_factor};
  if (bias.defined() && bias.shape() != Shape{heads, tokens, tokens}) {
    throw DimensionError("window_attention: bias " + shape_str(bias.shape()) + " should be " +
                         shape_str({heads, tokens, tokens}));
  }
  if (mask.defined()) {
    if (mask.rank() != 3 || mask.dim(1) != tokens || mask.dim(2) != tokens || windows % mask.dim(0) != 0) {
      throw DimensionError("window_attention: mask " + shape_str(mask.shape()) + " incompatible with " +
                           std::to_string(windows) + " windows of " + std::to_string(tokens) + " tokens");
    }
    g.mask_windows = mask.dim(0);
  }
  std::vector<double> out(static_cast<std::size_t>(windows * tokens * channels));
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(g.probs_size()));
  kp::attention_forward(g, qkv.data(), maybe(bias), maybe(mask), out, *probs);
  auto qi = qkv.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  return make_result("window_attention", {windows, tokens, channels}, std::move(out), {qkv, bias},
                     [g, qi, bi, probs](const TensorImpl& o) {
                       double* gq = grad_of(qi);
                       double* gb = grad_of(bi);
                       std::vector<double> scratch;
                       if (!gq) {
                         scratch.assign(qi->data.size(), 0.0);
                         gq = scratch.data();
                       }
                       kp::attention_backward(g, o.grad, qi->data, *probs, span_of(gq, static_cast<Index>(qi->data.size())),
                                              span_of(gb, g.heads * g.tokens * g.tokens));
                     });
}

}  // namespace swinc
