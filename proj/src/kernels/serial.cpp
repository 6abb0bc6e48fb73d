// Reference kernels: one output (or one scattered contribution) per loop
// iteration, no blocking, no threading.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "swinc/kernels.hpp"

namespace swinc::kernels::serial {

namespace {
inline bool inside(Index v, Index extent) { return v >= 0 && v < extent; }
}  // namespace

void conv3d_forward(const Conv3dGeom& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const Index cig = g.cin / g.groups;
  const Index cog = g.cout / g.groups;
  const Index k = g.k;
  for (Index n = 0; n < g.n; ++n) {
    for (Index co = 0; co < g.cout; ++co) {
      const Index grp = co / cog;
      for (Index od = 0; od < g.od; ++od) {
        for (Index oh = 0; oh < g.oh; ++oh) {
          for (Index ow = 0; ow < g.ow; ++ow) {
            double acc = bias.empty() ? 0.0 : bias[co];
            for (Index ci = 0; ci < cig; ++ci) {
              const Index c = grp * cig + ci;
              for (Index kd = 0; kd < k; ++kd) {
                const Index id = od * g.stride + kd - g.pad;
                if (!inside(id, g.d)) continue;
                for (Index kh = 0; kh < k; ++kh) {
                  const Index ih = oh * g.stride + kh - g.pad;
                  if (!inside(ih, g.h)) continue;
                  for (Index kw = 0; kw < k; ++kw) {
                    const Index iw = ow * g.stride + kw - g.pad;
                    if (!inside(iw, g.w)) continue;
                    acc += in[(((n * g.cin + c) * g.d + id) * g.h + ih) * g.w + iw] *
                           weight[(((co * cig + ci) * k + kd) * k + kh) * k + kw];
                  }
                }
              }
            }
            out[(((n * g.cout + co) * g.od + od) * g.oh + oh) * g.ow + ow] = acc;
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
  const Index k = g.k;
  for (Index n = 0; n < g.n; ++n) {
    for (Index co = 0; co < g.cout; ++co) {
      const Index grp = co / cog;
      for (Index od = 0; od < g.od; ++od) {
        for (Index oh = 0; oh < g.oh; ++oh) {
          for (Index ow = 0; ow < g.ow; ++ow) {
            const double go = grad_out[(((n * g.cout + co) * g.od + od) * g.oh + oh) * g.ow + ow];
            for (Index ci = 0; ci < cig; ++ci) {
              const Index c = grp * cig + ci;
              for (Index kd = 0; kd < k; ++kd) {
                const Index id = od * g.stride + kd - g.pad;
                if (!inside(id, g.d)) continue;
                for (Index kh = 0; kh < k; ++kh) {
                  const Index ih = oh * g.stride + kh - g.pad;
                  if (!inside(ih, g.h)) continue;
                  for (Index kw = 0; kw < k; ++kw) {
                    const Index iw = ow * g.stride + kw - g.pad;
                    if (!inside(iw, g.w)) continue;
                    grad_in[(((n * g.cin + c) * g.d + id) * g.h + ih) * g.w + iw] +=
                        go * weight[(((co * cig + ci) * k + kd) * k + kh) * k + kw];
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
  const Index k = g.k;
  for (Index n = 0; n < g.n; ++n) {
    for (Index co = 0; co < g.cout; ++co) {
      const Index grp = co / cog;
      for (Index od = 0; od < g.od; ++od) {
        for (Index oh = 0; oh < g.oh; ++oh) {
          for (Index ow = 0; ow < g.ow; ++ow) {
            const double go = grad_out[(((n * g.cout + co) * g.od + od) * g.oh + oh) * g.ow + ow];
            if (!grad_bias.empty()) grad_bias[co] += go;
            for (Index ci = 0; ci < cig; ++ci) {
              const Index c = grp * cig + ci;
              for (Index kd = 0; kd < k; ++kd) {
                const Index id = od * g.stride + kd - g.pad;
                if (!inside(id, g.d)) continue;
                for (Index kh = 0; kh < k; ++kh) {
                  const Index ih = oh * g.stride + kh - g.pad;
                  if (!inside(ih, g.h)) continue;
                  for (Index kw = 0; kw < k; ++kw) {
                    const Index iw = ow * g.stride + kw - g.pad;
                    if (!inside(iw, g.w)) continue;
                    grad_weight[(((co * cig + ci) * k + kd) * k + kh) * k + kw] +=
                        go * in[(((n * g.cin + c) * g.d + id) * g.h + ih) * g.w + iw];
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

void avg_pool3d_forward(const PoolGeom& g, std::span<const double> in, std::span<double> out) {
  for (Index nc = 0; nc < g.n * g.c; ++nc) {
    for (Index od = 0; od < g.od; ++od) {
      for (Index oh = 0; oh < g.oh; ++oh) {
        for (Index ow = 0; ow < g.ow; ++ow) {
          double sum = 0.0;
          Index count = 0;
          for (Index kd = 0; kd < g.k; ++kd) {
            const Index id = od * g.stride + kd - g.pad;
            for (Index kh = 0; kh < g.k; ++kh) {
              const Index ih = oh * g.stride + kh - g.pad;
              for (Index kw = 0; kw < g.k; ++kw) {
                const Index iw = ow * g.stride + kw - g.pad;
                if (!inside(id, g.d) || !inside(ih, g.h) || !inside(iw, g.w)) continue;
                sum += in[((nc * g.d + id) * g.h + ih) * g.w + iw];
                ++count;
              }
            }
          }
          out[((nc * g.od + od) * g.oh + oh) * g.ow + ow] = sum / static_cast<double>(count);
        }
      }
    }
  }
}

void avg_pool3d_backward(const PoolGeom& g, std::span<const double> grad_out, std::span<double> grad_in) {
  for (Index nc = 0; nc < g.n * g.c; ++nc) {
    for (Index od = 0; od < g.od; ++od) {
      for (Index oh = 0; oh < g.oh; ++oh) {
        for (Index ow = 0; ow < g.ow; ++ow) {
          Index count = 0;
          for (Index kd = 0; kd < g.k; ++kd) {
            for (Index kh = 0; kh < g.k; ++kh) {
              for (Index kw = 0; kw < g.k; ++kw) {
                if (inside(od * g.stride + kd - g.pad, g.d) && inside(oh * g.stride + kh - g.pad, g.h) &&
                    inside(ow * g.stride + kw - g.pad, g.w)) {
                  ++count;
                }
              }
            }
          }
          const double go = grad_out[((nc * g.od + od) * g.oh + oh) * g.ow + ow] / static_cast<double>(count);
          for (Index kd = 0; kd < g.k; ++kd) {
            const Index id = od * g.stride + kd - g.pad;
            for (Index kh = 0; kh < g.k; ++kh) {
              const Index ih = oh * g.stride + kh - g.pad;
              for (Index kw = 0; kw < g.k; ++kw) {
                const Index iw = ow * g.stride + kw - g.pad;
                if (!inside(id, g.d) || !inside(ih, g.h) || !inside(iw, g.w)) continue;
                grad_in[((nc * g.d + id) * g.h + ih) * g.w + iw] += go;
              }
            }
          }
        }
      }
    }
  }
}

void linear_forward(Index rows, Index din, Index dout, std::span<const double> x,
                    std::span<const double> weight, std::span<const double> bias, std::span<double> out) {
  for (Index m = 0; m < rows; ++m) {
    for (Index o = 0; o < dout; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (Index i = 0; i < din; ++i) acc += x[m * din + i] * weight[o * din + i];
      out[m * dout + o] = acc;
    }
  }
}

void linear_backward_input(Index rows, Index din, Index dout, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_x) {
  for (Index m = 0; m < rows; ++m) {
    for (Index o = 0; o < dout; ++o) {
      for (Index i = 0; i < din; ++i) grad_x[m * din + i] += grad_out[m * dout + o] * weight[o * din + i];
    }
  }
}

void linear_backward_weight(Index rows, Index din, Index dout, std::span<const double> grad_out,
                            std::span<const double> x, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  for (Index m = 0; m < rows; ++m) {
    for (Index o = 0; o < dout; ++o) {
      const double go = grad_out[m * dout + o];
      if (!grad_bias.empty()) grad_bias[o] += go;
      for (Index i = 0; i < din; ++i) grad_weight[o * din + i] += go * x[m * din + i];
    }
  }
}

void attention_forward(const AttnGeom& g, std::span<const double> qkv, std::span<const double> bias,
                       std::span<const double> mask, std::span<double> out, std::span<double> probs) {
  const Index T = g.tokens, C = g.channels, hd = g.head_dim();
  std::vector<double> row(static_cast<std::size_t>(T));
  for (Index b = 0; b < g.windows; ++b) {
    for (Index head = 0; head < g.heads; ++head) {
      for (Index i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < T; ++j) {
          double s = 0.0;
          for (Index t = 0; t < hd; ++t) {
            s += qkv[(b * T + i) * 3 * C + head * hd + t] * qkv[(b * T + j) * 3 * C + C + head * hd + t];
          }
          s *= g.scale;
          if (!bias.empty()) s += bias[(head * T + i) * T + j];
          if (!mask.empty()) s += mask[((b % g.mask_windows) * T + i) * T + j];
          row[static_cast<std::size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (Index j = 0; j < T; ++j) {
          row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - mx);
          z += row[static_cast<std::size_t>(j)];
        }
        for (Index j = 0; j < T; ++j) {
          probs[((b * g.heads + head) * T + i) * T + j] = row[static_cast<std::size_t>(j)] / z;
        }
        for (Index t = 0; t < hd; ++t) {
          double acc = 0.0;
          for (Index j = 0; j < T; ++j) {
            acc += probs[((b * g.heads + head) * T + i) * T + j] * qkv[(b * T + j) * 3 * C + 2 * C + head * hd + t];
          }
          out[(b * T + i) * C + head * hd + t] = acc;
        }
      }
    }
  }
}

void attention_backward(const AttnGeom& g, std::span<const double> grad_out, std::span<const double> qkv,
                        std::span<const double> probs, std::span<double> grad_qkv, std::span<double> grad_bias) {
  const Index T = g.tokens, C = g.channels, hd = g.head_dim();
  std::vector<double> dp(static_cast<std::size_t>(T));
  for (Index b = 0; b < g.windows; ++b) {
    for (Index head = 0; head < g.heads; ++head) {
      auto P = [&](Index i, Index j) { return probs[((b * g.heads + head) * T + i) * T + j]; };
      auto q = [&](Index i, Index t) { return qkv[(b * T + i) * 3 * C + head * hd + t]; };
      auto k = [&](Index i, Index t) { return qkv[(b * T + i) * 3 * C + C + head * hd + t]; };
      auto v = [&](Index i, Index t) { return qkv[(b * T + i) * 3 * C + 2 * C + head * hd + t]; };
      auto go = [&](Index i, Index t) { return grad_out[(b * T + i) * C + head * hd + t]; };
      for (Index i = 0; i < T; ++i) {
        for (Index j = 0; j < T; ++j) {
          double s = 0.0;
          for (Index t = 0; t < hd; ++t) s += go(i, t) * v(j, t);
          dp[static_cast<std::size_t>(j)] = s;
          for (Index t = 0; t < hd; ++t) grad_qkv[(b * T + j) * 3 * C + 2 * C + head * hd + t] += P(i, j) * go(i, t);
        }
        double dot = 0.0;
        for (Index j = 0; j < T; ++j) dot += dp[static_cast<std::size_t>(j)] * P(i, j);
        for (Index j = 0; j < T; ++j) {
          const double ds = P(i, j) * (dp[static_cast<std::size_t>(j)] - dot);
          if (!grad_bias.empty()) grad_bias[(head * T + i) * T + j] += ds;
          for (Index t = 0; t < hd; ++t) {
            grad_qkv[(b * T + i) * 3 * C + head * hd + t] += g.scale * ds * k(j, t);
            grad_qkv[(b * T + j) * 3 * C + C + head * hd + t] += g.scale * ds * q(i, t);
          }
        }
      }
    }
  }
}

}  // namespace swinc::kernels::serial
