#include "swinc/model.hpp"

namespace swinc {

SegmentationModel SegmentationModel::make(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  SegmentationModel m;
  m.config = config;
  m.encoder = Encoder::make(config, rng);
  m.decoder = Decoder::make(config, rng);
  require_grad(m.parameters());
  return m;
}

Tensor SegmentationModel::forward(const Tensor& input) {
  const FeaturePyramid pyr = encoder.forward(input, training);
  return decoder.forward(pyr, input);
}

ParamList SegmentationModel::parameters() const {
  ParamList out;
  encoder.collect("encoder", out);
  decoder.collect("decoder", out);
  return out;
}

void SegmentationModel::zero_grad() const {
  for (const auto& p : parameters()) {
    if (!p.trainable) continue;
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

ParamBreakdown allocated_breakdown(const ParamList& params) {
  ParamBreakdown b{{"embed", 0}, {"stages", 0}, {"merges", 0}, {"decoder", 0}, {"head", 0}};
  for (const auto& p : params) {
    if (!p.trainable) continue;
    const std::string& n = p.name;
    std::string group = "decoder";
    if (n.rfind("encoder.patch_embed", 0) == 0) {
      group = "embed";
    } else if (n.find(".merge.") != std::string::npos) {
      group = "merges";
    } else if (n.rfind("encoder.", 0) == 0) {
      group = "stages";
    } else if (n.rfind("decoder.head", 0) == 0) {
      group = "head";
    }
    b[group] += p.tensor.numel();
  }
  return b;
}

void require_grad(const ParamList& params) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    Tensor t = p.tensor;
    t.set_requires_grad(true);
  }
}

}  // namespace swinc
