// Serial reference versus OpenMP kernels on toy-model shapes.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "swinc/kernels.hpp"
#include "swinc/rng.hpp"

namespace K = swinc::kernels;
using swinc::Index;

namespace {

std::vector<double> filled(Index size, std::uint64_t seed) {
  swinc::Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(size));
  for (auto& e : v) e = rng.uniform(-1.0, 1.0);
  return v;
}

struct Serial {
  static constexpr auto conv_fwd = K::serial::conv3d_forward;
  static constexpr auto conv_bwd_in = K::serial::conv3d_backward_input;
  static constexpr auto conv_bwd_w = K::serial::conv3d_backward_weight;
  static constexpr auto pool_fwd = K::serial::avg_pool3d_forward;
  static constexpr auto linear_fwd = K::serial::linear_forward;
  static constexpr auto linear_bwd_w = K::serial::linear_backward_weight;
  static constexpr auto attn_fwd = K::serial::attention_forward;
  static constexpr auto attn_bwd = K::serial::attention_backward;
};

struct Parallel {
  static constexpr auto conv_fwd = K::parallel::conv3d_forward;
  static constexpr auto conv_bwd_in = K::parallel::conv3d_backward_input;
  static constexpr auto conv_bwd_w = K::parallel::conv3d_backward_weight;
  static constexpr auto pool_fwd = K::parallel::avg_pool3d_forward;
  static constexpr auto linear_fwd = K::parallel::linear_forward;
  static constexpr auto linear_bwd_w = K::parallel::linear_backward_weight;
  static constexpr auto attn_fwd = K::parallel::attention_forward;
  static constexpr auto attn_bwd = K::parallel::attention_backward;
};

// Batch 2, C channels at edge^3, 3x3x3 same-padded.
K::Conv3dGeom conv_geom(const benchmark::State& s) {
  const Index c = s.range(0), e = s.range(1);
  return K::Conv3dGeom::make(2, c, e, e, e, c, 3, 1, 1);
}

template <class Impl>
void BM_Conv3dForward(benchmark::State& state) {
  const auto g = conv_geom(state);
  const auto x = filled(g.in_size(), 1), w = filled(g.weight_size(), 2), b = filled(g.cout, 3);
  std::vector<double> y(static_cast<size_t>(g.out_size()));
  for (auto _ : state) {
    Impl::conv_fwd(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * g.out_size() * g.weight_size() / g.cout);
}

template <class Impl>
void BM_Conv3dBackward(benchmark::State& state) {
  const auto g = conv_geom(state);
  const auto x = filled(g.in_size(), 1), w = filled(g.weight_size(), 2), go = filled(g.out_size(), 3);
  std::vector<double> gi(x.size()), gw(w.size()), gb(static_cast<size_t>(g.cout));
  for (auto _ : state) {
    Impl::conv_bwd_in(g, go, w, gi);
    Impl::conv_bwd_w(g, go, x, gw, gb);
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <class Impl>
void BM_AvgPool3d(benchmark::State& state) {
  const Index c = state.range(0), e = state.range(1);
  const auto g = K::PoolGeom::make(2, c, e, e, e, 3, 1, 1);
  const auto x = filled(g.in_size(), 4);
  std::vector<double> y(static_cast<size_t>(g.out_size()));
  for (auto _ : state) {
    Impl::pool_fwd(g, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

// Token-wise linear layers: rows = batch * tokens, din -> dout.
template <class Impl>
void BM_Linear(benchmark::State& state) {
  const Index rows = state.range(0), din = state.range(1), dout = 4 * din;
  const auto x = filled(rows * din, 5), w = filled(dout * din, 6), b = filled(dout, 7), go = filled(rows * dout, 8);
  std::vector<double> y(static_cast<size_t>(rows * dout)), gw(w.size()), gb(b.size());
  for (auto _ : state) {
    Impl::linear_fwd(rows, din, dout, x, w, b, y);
    Impl::linear_bwd_w(rows, din, dout, go, x, gw, gb);
    benchmark::DoNotOptimize(y.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

// 4^3-token windows with bias and shift mask, forward and backward.
template <class Impl>
void BM_WindowAttention(benchmark::State& state) {
  K::AttnGeom g;
  g.windows = state.range(0);
  g.tokens = 64;
  g.channels = state.range(1);
  g.heads = std::max<Index>(1, g.channels / 8);
  g.mask_windows = g.windows / 2;
  g.scale = 1.0 / std::sqrt(static_cast<double>(g.head_dim()));
  const auto qkv = filled(g.windows * g.tokens * 3 * g.channels, 9), bias = filled(g.heads * g.tokens * g.tokens, 10);
  std::vector<double> mask(static_cast<size_t>(g.mask_windows * g.tokens * g.tokens));
  const auto go = filled(g.windows * g.tokens * g.channels, 11);
  std::vector<double> y(go.size()), probs(static_cast<size_t>(g.probs_size())), gq(qkv.size()), gbias(bias.size());
  for (auto _ : state) {
    Impl::attn_fwd(g, qkv, bias, mask, y, probs);
    Impl::attn_bwd(g, go, qkv, probs, gq, gbias);
    benchmark::DoNotOptimize(gq.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 16})->Args({16, 16})->Args({8, 32})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_Conv3dForward<Serial>)->Apply(conv_args);
BENCHMARK(BM_Conv3dForward<Parallel>)->Apply(conv_args);
BENCHMARK(BM_Conv3dBackward<Serial>)->Apply(conv_args);
BENCHMARK(BM_Conv3dBackward<Parallel>)->Apply(conv_args);
BENCHMARK(BM_AvgPool3d<Serial>)->Apply(conv_args);
BENCHMARK(BM_AvgPool3d<Parallel>)->Apply(conv_args);
BENCHMARK(BM_Linear<Serial>)->Args({8192, 8})->Args({1024, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Linear<Parallel>)->Args({8192, 8})->Args({1024, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowAttention<Serial>)->Args({128, 8})->Args({16, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowAttention<Parallel>)->Args({128, 8})->Args({16, 64})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
