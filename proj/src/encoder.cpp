#include "swinc/encoder.hpp"

#include "swinc/errors.hpp"

namespace swinc {

std::string to_string(MergeKind kind) { return kind == MergeKind::linear ? "linear" : "conv"; }
std::string to_string(DecoderKind kind) { return kind == DecoderKind::swinception ? "swinception" : "swinunetr"; }

MergeKind parse_merge_kind(const std::string& s) {
  if (s == "linear") return MergeKind::linear;
  if (s == "conv") return MergeKind::conv;
  throw ConfigError("unknown merge kind '" + s + "' (expected linear or conv)");
}

DecoderKind parse_decoder_kind(const std::string& s) {
  if (s == "swinception") return DecoderKind::swinception;
  if (s == "swinunetr") return DecoderKind::swinunetr;
  throw ConfigError("unknown decoder kind '" + s + "' (expected swinception or swinunetr)");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.base_dim = 8;
  c.heads = {1, 2, 4, 8};
  c.num_classes = 3;
  return c;
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (base_dim < 1) throw ConfigError("base_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (mlp_ratio <= 0.0) throw ConfigError("mlp_ratio must be > 0");
  WindowSpec::regular(window).validate();
  for (int s = 0; s < kNumStages; ++s) {
    if (depths[s] < 1) throw ConfigError("depths[" + std::to_string(s) + "] must be >= 1");
    if (heads[s] < 1 || stage_channels(s) % heads[s] != 0) {
      throw ConfigError("stage " + std::to_string(s) + " channels " + std::to_string(stage_channels(s)) +
                        " not divisible by heads " + std::to_string(heads[s]));
    }
  }
  BranchChannels::resolve(widths, base_dim);
}

BlockConfig ModelConfig::block_config(int stage) const {
  BlockConfig b;
  b.channels = stage_channels(stage);
  b.heads = heads[stage];
  b.window = window;
  b.use_rel_bias = use_rel_bias;
  b.ff_kind = ff_kind;
  b.widths = widths;
  b.mlp_ratio = mlp_ratio;
  return b;
}

Tensor gather_neighbourhoods(const Tensor& volume) {
  if (volume.rank() != 5) throw DimensionError("gather_neighbourhoods: expected rank 5, got " + shape_str(volume.shape()));
  const Index n = volume.dim(0), c = volume.dim(1), d = volume.dim(2), h = volume.dim(3), w = volume.dim(4);
  if (d % 2 || h % 2 || w % 2) throw DimensionError("patch merge needs even extents, got " + shape_str(volume.shape()));
  const Index od = d / 2, oh = h / 2, ow = w / 2;
  auto index = std::make_shared<std::vector<Index>>();
  index->reserve(static_cast<size_t>(volume.numel()));
  for (Index b = 0; b < n; ++b)
    for (Index z = 0; z < od; ++z)
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x)
          for (Index o = 0; o < 8; ++o) {
            const Index zz = 2 * z + (o >> 2), yy = 2 * y + ((o >> 1) & 1), xx = 2 * x + (o & 1);
            for (Index ch = 0; ch < c; ++ch) index->push_back((((b * c + ch) * d + zz) * h + yy) * w + xx);
          }
  return gather(volume, std::move(index), {n, od * oh * ow, 8 * c});
}

PatchMerge PatchMerge::make(MergeKind kind, Index channels, Rng& rng) {
  PatchMerge m;
  m.kind = kind;
  m.channels = channels;
  if (kind == MergeKind::linear) {
    m.norm = NormParams::make(8 * channels);
    m.reduce = LinearParams::make(8 * channels, 2 * channels, rng);
  } else {
    m.conv = ConvParams::make(channels, 2 * channels, 3, rng);
    m.norm = NormParams::make(2 * channels);
  }
  return m;
}

Tensor PatchMerge::forward(const Tensor& volume) const {
  if (volume.rank() != 5 || volume.dim(1) != channels) {
    throw DimensionError("patch_merge: expected N x " + std::to_string(channels) + " x D x H x W, got " +
                         shape_str(volume.shape()));
  }
  const Dims3 dims = spatial_dims(volume);
  if (dims[0] % 2 || dims[1] % 2 || dims[2] % 2) {
    throw DimensionError("patch_merge: odd extents " + shape_str(volume.shape()));
  }
  const Dims3 half{dims[0] / 2, dims[1] / 2, dims[2] / 2};
  if (kind == MergeKind::linear) {
    const Tensor t = layer_norm(gather_neighbourhoods(volume), norm.gamma, norm.beta);
    return to_volume(reduce(t), half);
  }
  const Tensor y = conv3d(volume, conv.weight, conv.bias, 2, 1);
  return to_volume(layer_norm(to_tokens(y), norm.gamma, norm.beta), half);
}

void PatchMerge::collect(const std::string& prefix, ParamList& out) const {
  if (kind == MergeKind::linear) {
    norm.collect(join_name(prefix, "norm"), out);
    reduce.collect(join_name(prefix, "reduction"), out);
  } else {
    conv.collect(join_name(prefix, "conv"), out);
    norm.collect(join_name(prefix, "norm"), out);
  }
}

Encoder Encoder::make(const ModelConfig& config, Rng& rng) {
  config.validate();
  Encoder e;
  e.config = config;
  e.embed = ConvParams::make(config.in_channels, config.base_dim, 2, rng);
  for (int s = 0; s < kNumStages; ++s) {
    const BlockConfig bc = config.block_config(s);
    for (Index b = 0; b < config.depths[s]; ++b) e.stages[s].push_back(SwinceptionBlock::make(bc, rng));
    if (s < config.merge_count()) e.merges.push_back(PatchMerge::make(config.merge_kind, bc.channels, rng));
  }
  return e;
}

Tensor Encoder::patch_embed(const Tensor& input) const {
  if (input.rank() != 5 || input.dim(1) != config.in_channels) {
    throw DimensionError("patch_embed: expected N x " + std::to_string(config.in_channels) + " x D x H x W, got " +
                         shape_str(input.shape()));
  }
  return conv3d(input, embed.weight, embed.bias, 2, 0);
}

Tensor Encoder::run_stage(int stage, const Tensor& volume, bool training) {
  const Dims3 dims = spatial_dims(volume);
  Tensor tokens = to_tokens(volume);
  auto& blocks = stages[static_cast<size_t>(stage)];
  for (size_t b = 0; b < blocks.size(); ++b) {
    const WindowSpec spec = b % 2 == 0 ? WindowSpec::regular(config.window) : WindowSpec::shifted(config.window);
    tokens = blocks[b].forward(tokens, dims, spec, training);
  }
  return to_volume(tokens, dims);
}

FeaturePyramid Encoder::forward(const Tensor& input, bool training) {
  if (input.rank() != 5) throw DimensionError("encoder: expected N x C x D x H x W, got " + shape_str(input.shape()));
  FeaturePyramid pyr;
  pyr.input = spatial_dims(input);
  for (int a = 0; a < 3; ++a) {
    if (pyr.input[a] < kInputMultiple) {
      throw ConfigError("input extent " + std::to_string(pyr.input[a]) + " is below the minimum of " +
                        std::to_string(kInputMultiple) + " voxels per axis");
    }
    pyr.padded[a] = (pyr.input[a] + kInputMultiple - 1) / kInputMultiple * kInputMultiple;
  }
  const Tensor x0 = pyr.padded == pyr.input ? input : pad_spatial(input, pyr.padded);

  Tensor x = patch_embed(x0);
  pyr.levels.push_back(x);
  const bool pre_merge = config.decoder_kind == DecoderKind::swinception;
  for (int s = 0; s < kNumStages; ++s) {
    x = run_stage(s, x, training);
    if (pre_merge) {
      pyr.levels.push_back(x);
      if (s < static_cast<int>(merges.size())) x = merges[static_cast<size_t>(s)].forward(x);
    } else {
      x = merges[static_cast<size_t>(s)].forward(x);
      pyr.levels.push_back(x);
    }
  }
  return pyr;
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  embed.collect(join_name(prefix, "patch_embed"), out);
  for (int s = 0; s < kNumStages; ++s) {
    const std::string stage = join_name(prefix, "stages." + std::to_string(s));
    for (size_t b = 0; b < stages[s].size(); ++b) stages[s][b].collect(join_name(stage, "blocks." + std::to_string(b)), out);
    if (s < static_cast<int>(merges.size())) merges[static_cast<size_t>(s)].collect(join_name(stage, "merge"), out);
  }
}

}  // namespace swinc
