#pragma once

// Transformer block with interchangeable feed-forward layers:
//
//   Z = W-MHSA(LN(X)) + X
//   Y = FF(LN(Z)) + Z
//
// FF is the Inception multi-branch convolution, the plain two-layer MLP, or
// the MLP with two depth-wise conv blocks between its linears.

#include <optional>
#include <string>
#include <variant>

#include "swinc/ops.hpp"
#include "swinc/params.hpp"
#include "swinc/rng.hpp"
#include "swinc/window_attention.hpp"

namespace swinc {

enum class FeedForwardKind { inception, mlp, depthwise };

std::string to_string(FeedForwardKind kind);
FeedForwardKind parse_ff_kind(const std::string& s);

/// Inception branch widths as multiples of the block's channel count C.
/// (1, 1, 1, 1) is the equal split; (4, 0, 0, 0) reduces to the Swin MLP.
struct BranchWidths {
  double b1 = 1.0;
  double b3 = 1.0;
  double b5 = 1.0;
  double bp = 1.0;
  double bottleneck_ratio = 0.125;
};

/// BranchWidths resolved to channel counts for a given C. Zero-width
/// branches are omitted.
struct BranchChannels {
  Index b1 = 0, b3 = 0, b5 = 0, bp = 0;
  Index bottleneck = 1;

  static BranchChannels resolve(const BranchWidths& widths, Index channels);
  Index total() const { return b1 + b3 + b5 + bp; }
};

Index mlp_hidden(Index channels, double ratio);

/// Affine pair for layer/batch/instance norm.
struct NormParams {
  Tensor gamma;
  Tensor beta;
  static NormParams make(Index channels);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LinearParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  static LinearParams make(Index in, Index out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Convolution weights with uniform(+-1/sqrt(fan_in)) init. `bias` is
/// undefined when constructed without one.
struct ConvParams {
  Tensor weight;  // [cout, cin/groups, k, k, k]
  Tensor bias;    // [cout]

  static ConvParams make(Index cin, Index cout, Index k, Rng& rng, bool with_bias = true, Index groups = 1);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// conv3d(k, stride 1, same padding) -> batch norm -> GELU. k must be odd.
struct ConvBlock {
  Tensor weight;  // [cout, cin/groups, k, k, k]
  Tensor bias;
  NormParams bn;
  BatchNormStats stats;
  Index k = 1;
  Index groups = 1;

  static ConvBlock make(Index cin, Index cout, Index k, Rng& rng, Index groups = 1);
  Tensor forward(const Tensor& volume, bool training);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct InceptionFF {
  Index channels = 0;
  BranchChannels widths;
  std::optional<ConvBlock> b1;
  std::optional<ConvBlock> b3_reduce, b3;
  std::optional<ConvBlock> b5_reduce, b5_mid, b5;
  std::optional<ConvBlock> bp;
  LinearParams out;

  static InceptionFF make(Index channels, const BranchWidths& widths, Rng& rng);
  /// tokens: N x T x C with T == D*H*W for `dims`.
  Tensor forward(const Tensor& tokens, const Dims3& dims, bool training);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct MlpFF {
  LinearParams fc1;
  LinearParams fc2;

  static MlpFF make(Index channels, double ratio, Rng& rng);
  Tensor forward(const Tensor& tokens) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct DepthwiseFF {
  LinearParams fc1;
  ConvBlock dw1;
  ConvBlock dw2;
  LinearParams fc2;

  static DepthwiseFF make(Index channels, double ratio, Rng& rng);
  Tensor forward(const Tensor& tokens, const Dims3& dims, bool training);
  void collect(const std::string& prefix, ParamList& out) const;
};

using FeedForward = std::variant<InceptionFF, MlpFF, DepthwiseFF>;

struct BlockConfig {
  Index channels = 48;
  Index heads = 3;
  Index window = 4;
  bool use_rel_bias = true;
  FeedForwardKind ff_kind = FeedForwardKind::inception;
  BranchWidths widths;
  double mlp_ratio = 4.0;
};

FeedForward make_feed_forward(const BlockConfig& cfg, Rng& rng);
Tensor feed_forward(FeedForward& ff, const Tensor& tokens, const Dims3& dims, bool training);

struct SwinceptionBlock {
  NormParams norm1;
  AttentionParams attn;
  NormParams norm2;
  FeedForward ff;

  static SwinceptionBlock make(const BlockConfig& cfg, Rng& rng);
  /// tokens: N x T x C. Shape-preserving.
  Tensor forward(const Tensor& tokens, const Dims3& dims, const WindowSpec& spec, bool training);
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace swinc
