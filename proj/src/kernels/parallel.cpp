// OpenMP kernels. Each parallel loop partitions the *written* buffer so no
// two threads touch the same output element; reductions that would cross
// partitions go through scratch buffers instead of atomics. Results match
// the serial kernels up to floating-point reassociation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "swinc/kernels.hpp"

namespace swinc::kernels::parallel {

namespace {

// Output positions o in [0, out_extent) with 0 <= o*stride + tap - pad < in_extent.
struct Range {
  Index lo, hi;
};

inline Range valid_range(Index out_extent, Index in_extent, Index tap, Index stride, Index pad) {
  const Index lo_num = pad - tap;
  Index lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
  const Index hi_num = in_extent - 1 + pad - tap;
  Index hi = hi_num < 0 ? 0 : hi_num / stride + 1;
  lo = std::min(lo, out_extent);
  hi = std::min(hi, out_extent);
  return {lo, std::max(lo, hi)};
}

// out[o] += a * x[o * stride] for o in [0, len).
inline void axpy_strided(Index len, double a, const double* __restrict x, Index stride, double* __restrict out) {
  if (stride == 1) {
#pragma omp simd
    for (Index o = 0; o < len; ++o) out[o] += a * x[o];
  } else {
    for (Index o = 0; o < len; ++o) out[o] += a * x[o * stride];
  }
}

inline double dot_strided(Index len, const double* __restrict a, const double* __restrict x, Index stride) {
  double acc = 0.0;
  if (stride == 1) {
#pragma omp simd reduction(+ : acc)
    for (Index o = 0; o < len; ++o) acc += a[o] * x[o];
  } else {
    for (Index o = 0; o < len; ++o) acc += a[o] * x[o * stride];
  }
  return acc;
}

}  // namespace

void conv3d_forward(const Conv3dGeom& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const Index cig = g.cin / g.groups;
  const Index cog = g.cout / g.groups;
  const Index k = g.k, s = g.stride;
  const Index in_plane = g.d * g.h * g.w;
  const Index out_plane = g.od * g.oh * g.ow;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < g.n; ++n) {
    for (Index co = 0; co < g.cout; ++co) {
      double* o = out.data() + (n * g.cout + co) * out_plane;
      std::fill(o, o + out_plane, bias.empty() ? 0.0 : bias[co]);
      const Index grp = co / cog;
      for (Index ci = 0; ci < cig; ++ci) {
        const double* x = in.data() + (n * g.cin + grp * cig + ci) * in_plane;
        const double* wk = weight.data() + (co * cig + ci) * k * k * k;
        for (Index kd = 0; kd < k; ++kd) {
          const Range rd = valid_range(g.od, g.d, kd, s, g.pad);
          for (Index kh = 0; kh < k; ++kh) {
            const Range rh = valid_range(g.oh, g.h, kh, s, g.pad);
            for (Index kw = 0; kw < k; ++kw) {
              const Range rw = valid_range(g.ow, g.w, kw, s, g.pad);
              const double wv = wk[(kd * k + kh) * k + kw];
              const Index len = rw.hi - rw.lo;
              if (len <= 0) continue;
              for (Index od = rd.lo; od < rd.hi; ++od) {
                const Index id = od * s + kd - g.pad;
                for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                  const Index ih = oh * s + kh - g.pad;
                  axpy_strided(len, wv, x + (id * g.h + ih) * g.w + rw.lo * s + kw - g.pad, s,
                               o + (od * g.oh + oh) * g.ow + rw.lo);
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_input(const Conv3dGeom& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in) {
  const Index cig = g.cin / g.groups;
  const Index cog = g.cout / g.groups;
  const Index k = g.k, s = g.stride;
  const Index in_plane = g.d * g.h * g.w;
  const Index out_plane = g.od * g.oh * g.ow;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < g.n; ++n) {
    for (Index c = 0; c < g.cin; ++c) {
      double* gi = grad_in.data() + (n * g.cin + c) * in_plane;
      const Index grp = c / cig;
      const Index ci = c % cig;
      for (Index co = grp * cog; co < (grp + 1) * cog; ++co) {
        const double* go = grad_out.data() + (n * g.cout + co) * out_plane;
        const double* wk = weight.data() + (co * cig + ci) * k * k * k;
        for (Index kd = 0; kd < k; ++kd) {
          const Range rd = valid_range(g.od, g.d, kd, s, g.pad);
          for (Index kh = 0; kh < k; ++kh) {
            const Range rh = valid_range(g.oh, g.h, kh, s, g.pad);
            for (Index kw = 0; kw < k; ++kw) {
              const Range rw = valid_range(g.ow, g.w, kw, s, g.pad);
              const double wv = wk[(kd * k + kh) * k + kw];
              const Index len = rw.hi - rw.lo;
              if (len <= 0) continue;
              for (Index od = rd.lo; od < rd.hi; ++od) {
                const Index id = od * s + kd - g.pad;
                for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                  const Index ih = oh * s + kh - g.pad;
                  double* dst = gi + (id * g.h + ih) * g.w + rw.lo * s + kw - g.pad;
                  const double* src = go + (od * g.oh + oh) * g.ow + rw.lo;
                  if (s == 1) {
#pragma omp simd
                    for (Index t = 0; t < len; ++t) dst[t] += wv * src[t];
                  } else {
                    for (Index t = 0; t < len; ++t) dst[t * s] += wv * src[t];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_weight(const Conv3dGeom& g, std::span<const double> grad_out,
                            std::span<const double> in, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const Index cig = g.cin / g.groups;
  const Index cog = g.cout / g.groups;
  const Index k = g.k, s = g.stride;
  const Index in_plane = g.d * g.h * g.w;
  const Index out_plane = g.od * g.oh * g.ow;
#pragma omp parallel
  {
  std::vector<double> lanes(static_cast<size_t>(g.ow));
#pragma omp for collapse(2) schedule(static)
  for (Index co = 0; co < g.cout; ++co) {
    for (Index ci = 0; ci < cig; ++ci) {
      const Index grp = co / cog;
      double* gw = grad_weight.data() + (co * cig + ci) * k * k * k;
      for (Index n = 0; n < g.n; ++n) {
        const double* go = grad_out.data() + (n * g.cout + co) * out_plane;
        const double* x = in.data() + (n * g.cin + grp * cig + ci) * in_plane;
        for (Index kd = 0; kd < k; ++kd) {
          const Range rd = valid_range(g.od, g.d, kd, s, g.pad);
          for (Index kh = 0; kh < k; ++kh) {
            const Range rh = valid_range(g.oh, g.h, kh, s, g.pad);
            for (Index kw = 0; kw < k; ++kw) {
              const Range rw = valid_range(g.ow, g.w, kw, s, g.pad);
              const Index len = rw.hi - rw.lo;
              if (len <= 0) continue;
              double acc = 0.0;
              if (s == 1) {
                // Lane-wise partial sums keep the FMAs independent across rows.
                std::fill(lanes.begin(), lanes.begin() + len, 0.0);
                double* __restrict lane = lanes.data();
                for (Index od = rd.lo; od < rd.hi; ++od) {
                  const Index id = od + kd - g.pad;
                  for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                    const Index ih = oh + kh - g.pad;
                    const double* __restrict a = go + (od * g.oh + oh) * g.ow + rw.lo;
                    const double* __restrict b = x + (id * g.h + ih) * g.w + rw.lo + kw - g.pad;
#pragma omp simd
                    for (Index t = 0; t < len; ++t) lane[t] += a[t] * b[t];
                  }
                }
                for (Index t = 0; t < len; ++t) acc += lane[t];
              } else {
                for (Index od = rd.lo; od < rd.hi; ++od) {
                  const Index id = od * s + kd - g.pad;
                  for (Index oh = rh.lo; oh < rh.hi; ++oh) {
                    const Index ih = oh * s + kh - g.pad;
                    acc += dot_strided(len, go + (od * g.oh + oh) * g.ow + rw.lo,
                                       x + (id * g.h + ih) * g.w + rw.lo * s + kw - g.pad, s);
                  }
                }
              }
              gw[(kd * k + kh) * k + kw] += acc;
            }
          }
        }
      }
    }
  }
  }
  if (grad_bias.empty()) return;
#pragma omp parallel for schedule(static)
  for (Index co = 0; co < g.cout; ++co) {
    double acc = 0.0;
    for (Index n = 0; n < g.n; ++n) {
      const double* go = grad_out.data() + (n * g.cout + co) * out_plane;
      for (Index t = 0; t < out_plane; ++t) acc += go[t];
    }
    grad_bias[co] += acc;
  }
}

void avg_pool3d_forward(const PoolGeom& g, std::span<const double> in, std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (Index nc = 0; nc < g.n * g.c; ++nc) {
    const double* x = in.data() + nc * g.d * g.h * g.w;
    double* o = out.data() + nc * g.od * g.oh * g.ow;
    for (Index od = 0; od < g.od; ++od) {
      const Index d0 = std::max<Index>(0, od * g.stride - g.pad);
      const Index d1 = std::min(g.d, od * g.stride - g.pad + g.k);
      for (Index oh = 0; oh < g.oh; ++oh) {
        const Index h0 = std::max<Index>(0, oh * g.stride - g.pad);
        const Index h1 = std::min(g.h, oh * g.stride - g.pad + g.k);
        for (Index ow = 0; ow < g.ow; ++ow) {
          const Index w0 = std::max<Index>(0, ow * g.stride - g.pad);
          const Index w1 = std::min(g.w, ow * g.stride - g.pad + g.k);
          double sum = 0.0;
          for (Index id = d0; id < d1; ++id)
            for (Index ih = h0; ih < h1; ++ih)
              for (Index iw = w0; iw < w1; ++iw) sum += x[(id * g.h + ih) * g.w + iw];
          o[(od * g.oh + oh) * g.ow + ow] = sum / static_cast<double>((d1 - d0) * (h1 - h0) * (w1 - w0));
        }
      }
    }
  }
}

void avg_pool3d_backward(const PoolGeom& g, std::span<const double> grad_out, std::span<double> grad_in) {
#pragma omp parallel for schedule(static)
  for (Index nc = 0; nc < g.n * g.c; ++nc) {
    double* gi = grad_in.data() + nc * g.d * g.h * g.w;
    const double* go = grad_out.data() + nc * g.od * g.oh * g.ow;
    for (Index od = 0; od < g.od; ++od) {
      const Index d0 = std::max<Index>(0, od * g.stride - g.pad);
      const Index d1 = std::min(g.d, od * g.stride - g.pad + g.k);
      for (Index oh = 0; oh < g.oh; ++oh) {
        const Index h0 = std::max<Index>(0, oh * g.stride - g.pad);
        const Index h1 = std::min(g.h, oh * g.stride - g.pad + g.k);
        for (Index ow = 0; ow < g.ow; ++ow) {
          const Index w0 = std::max<Index>(0, ow * g.stride - g.pad);
          const Index w1 = std::min(g.w, ow * g.stride - g.pad + g.k);
          const double share =
              go[(od * g.oh + oh) * g.ow + ow] / static_cast<double>((d1 - d0) * (h1 - h0) * (w1 - w0));
          for (Index id = d0; id < d1; ++id)
            for (Index ih = h0; ih < h1; ++ih)
              for (Index iw = w0; iw < w1; ++iw) gi[(id * g.h + ih) * g.w + iw] += share;
        }
      }
    }
  }
}

void linear_forward(Index rows, Index din, Index dout, std::span<const double> x,
                    std::span<const double> weight, std::span<const double> bias, std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (Index m = 0; m < rows; ++m) {
    const double* xr = x.data() + m * din;
    double* orow = out.data() + m * dout;
    for (Index o = 0; o < dout; ++o) {
      orow[o] = (bias.empty() ? 0.0 : bias[o]) + dot_strided(din, weight.data() + o * din, xr, 1);
    }
  }
}

void linear_backward_input(Index rows, Index din, Index dout, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_x) {
#pragma omp parallel for schedule(static)
  for (Index m = 0; m < rows; ++m) {
    double* gx = grad_x.data() + m * din;
    const double* go = grad_out.data() + m * dout;
    for (Index o = 0; o < dout; ++o) axpy_strided(din, go[o], weight.data() + o * din, 1, gx);
  }
}

void linear_backward_weight(Index rows, Index din, Index dout, std::span<const double> grad_out,
                            std::span<const double> x, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < dout; ++o) {
    double* gw = grad_weight.data() + o * din;
    double gb = 0.0;
    for (Index m = 0; m < rows; ++m) {
      const double go = grad_out[m * dout + o];
      gb += go;
      axpy_strided(din, go, x.data() + m * din, 1, gw);
    }
    if (!grad_bias.empty()) grad_bias[o] += gb;
  }
}

void attention_forward(const AttnGeom& g, std::span<const double> qkv, std::span<const double> bias,
                       std::span<const double> mask, std::span<double> out, std::span<double> probs) {
  const Index T = g.tokens, C = g.channels, hd = g.head_dim(), row = 3 * C;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index b = 0; b < g.windows; ++b) {
    for (Index head = 0; head < g.heads; ++head) {
      const double* base = qkv.data() + b * T * row + head * hd;
      double* P = probs.data() + (b * g.heads + head) * T * T;
      const double* bias_h = bias.empty() ? nullptr : bias.data() + head * T * T;
      const double* mask_b = mask.empty() ? nullptr : mask.data() + (b % g.mask_windows) * T * T;
      for (Index i = 0; i < T; ++i) {
        const double* q = base + i * row;
        double* pr = P + i * T;
        double mx = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < T; ++j) {
          double sc = g.scale * dot_strided(hd, q, base + j * row + C, 1);
          if (bias_h) sc += bias_h[i * T + j];
          if (mask_b) sc += mask_b[i * T + j];
          pr[j] = sc;
          mx = std::max(mx, sc);
        }
        double z = 0.0;
        for (Index j = 0; j < T; ++j) {
          pr[j] = std::exp(pr[j] - mx);
          z += pr[j];
        }
        const double inv = 1.0 / z;
        for (Index j = 0; j < T; ++j) pr[j] *= inv;
        double* o = out.data() + (b * T + i) * C + head * hd;
        std::fill(o, o + hd, 0.0);
        for (Index j = 0; j < T; ++j) axpy_strided(hd, pr[j], base + j * row + 2 * C, 1, o);
      }
    }
  }
}

void attention_backward(const AttnGeom& g, std::span<const double> grad_out, std::span<const double> qkv,
                        std::span<const double> probs, std::span<double> grad_qkv, std::span<double> grad_bias) {
  const Index T = g.tokens, C = g.channels, hd = g.head_dim(), row = 3 * C;
  // dS per (window, head); reduced over windows afterwards for the bias.
  std::vector<double> dscores(grad_bias.empty() ? 0 : static_cast<std::size_t>(g.probs_size()));
#pragma omp parallel
  {
    std::vector<double> ds(static_cast<std::size_t>(T));
#pragma omp for collapse(2) schedule(static)
    for (Index b = 0; b < g.windows; ++b) {
      for (Index head = 0; head < g.heads; ++head) {
        const double* base = qkv.data() + b * T * row + head * hd;
        double* gbase = grad_qkv.data() + b * T * row + head * hd;
        const double* P = probs.data() + (b * g.heads + head) * T * T;
        for (Index i = 0; i < T; ++i) {
          const double* go = grad_out.data() + (b * T + i) * C + head * hd;
          const double* pr = P + i * T;
          double dot = 0.0;
          for (Index j = 0; j < T; ++j) {
            ds[static_cast<std::size_t>(j)] = dot_strided(hd, go, base + j * row + 2 * C, 1);
            dot += ds[static_cast<std::size_t>(j)] * pr[j];
            axpy_strided(hd, pr[j], go, 1, gbase + j * row + 2 * C);
          }
          for (Index j = 0; j < T; ++j) {
            const double d = pr[j] * (ds[static_cast<std::size_t>(j)] - dot);
            if (!dscores.empty()) dscores[static_cast<std::size_t>(((b * g.heads + head) * T + i) * T + j)] = d;
            axpy_strided(hd, g.scale * d, base + j * row + C, 1, gbase + i * row);
            axpy_strided(hd, g.scale * d, base + i * row, 1, gbase + j * row + C);
          }
        }
      }
    }
  }
  if (grad_bias.empty()) return;
  const Index tt = T * T;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index head = 0; head < g.heads; ++head) {
    for (Index e = 0; e < tt; ++e) {
      double acc = 0.0;
      for (Index b = 0; b < g.windows; ++b) acc += dscores[static_cast<std::size_t>((b * g.heads + head) * tt + e)];
      grad_bias[head * tt + e] += acc;
    }
  }
}

}  // namespace swinc::kernels::parallel
