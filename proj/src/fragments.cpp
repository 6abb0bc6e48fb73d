#include "swinc/fragments.hpp"

#include <map>
#include <memory>
#include <optional>

#include "swinc/errors.hpp"
#include "swinc/metrics.hpp"
#include "swinc/model.hpp"

namespace swinc {
namespace {

Tensor leaf(const Shape& shape, Rng& rng, double stddev = 1.0) {
  Tensor t(shape);
  rng.fill_normal(t, 0.0, stddev);
  t.set_requires_grad(true);
  return t;
}

// sum(y * r) for a fixed random r.
Tensor weighted_sum(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

Tensor probe_weights(const Shape& shape, Rng& rng) {
  Tensor r(shape);
  rng.fill_normal(r, 0.0, 1.0);
  return r;
}

ParamList trainable(const ParamList& all) {
  ParamList out;
  for (const auto& p : all) {
    if (p.trainable) out.push_back(p);
  }
  require_grad(out);
  return out;
}

using Builder = std::function<GradFragment(Rng&)>;

// Wraps a function of leaf inputs: loss = sum(f(inputs) * r).
GradFragment of_inputs(std::string name, std::vector<Tensor> inputs, std::function<Tensor(const std::vector<Tensor>&)> f,
                       Rng& rng) {
  Shape out_shape;
  {
    NoGradGuard guard;
    out_shape = f(inputs).shape();
  }
  const Tensor r = probe_weights(out_shape, rng);
  GradFragment g;
  g.name = std::move(name);
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].requires_grad()) g.wrt.push_back({"input" + std::to_string(i), inputs[i]});
  }
  g.loss = [inputs, f, r] { return weighted_sum(f(inputs), r); };
  return g;
}

// Wraps a stateful module: loss = sum(f(x) * r), checked w.r.t. x and params.
template <typename Module>
GradFragment of_module(std::string name, std::shared_ptr<Module> m, const Tensor& x,
                       std::function<Tensor(Module&, const Tensor&)> f, Rng& rng) {
  ParamList params;
  m->collect("", params);
  GradFragment g = of_inputs(std::move(name), {x}, [m, f](const std::vector<Tensor>& in) { return f(*m, in[0]); }, rng);
  for (auto& p : trainable(params)) g.wrt.push_back(p);
  return g;
}

const std::map<std::string, Builder>& grad_builders() {
  static const std::map<std::string, Builder> b = [] {
    std::map<std::string, Builder> m;
    using V = std::vector<Tensor>;
    auto simple = [&](const std::string& name, std::vector<Shape> shapes, std::function<Tensor(const V&)> f) {
      m[name] = [name, shapes, f](Rng& rng) {
        V in;
        for (const auto& s : shapes) in.push_back(leaf(s, rng));
        return of_inputs(name, in, f, rng);
      };
    };
    const Shape vol{2, 3, 4, 5, 3};
    simple("add", {{3, 4}, {3, 4}}, [](const V& x) { return add(x[0], x[1]); });
    simple("sub", {{3, 4}, {3, 4}}, [](const V& x) { return sub(x[0], x[1]); });
    simple("mul", {{3, 4}, {3, 4}}, [](const V& x) { return mul(x[0], x[1]); });
    simple("scale", {{3, 4}}, [](const V& x) { return scale(x[0], -1.7); });
    simple("sum", {{3, 4}}, [](const V& x) { return sum(mul(x[0], x[0])); });
    simple("mean", {{3, 4}}, [](const V& x) { return mean(mul(x[0], x[0])); });
    simple("reshape", {{3, 4}}, [](const V& x) { return reshape(x[0], {2, 6}); });
    simple("permute", {{2, 3, 4}}, [](const V& x) { return permute(x[0], {2, 0, 1}); });
    simple("gather", {{6}}, [](const V& x) {
      auto idx = std::make_shared<const std::vector<Index>>(std::vector<Index>{5, 0, -1, 2, 2, 3, 0});
      return gather(x[0], idx, {7});
    });
    simple("concat", {{2, 3, 2}, {2, 1, 2}}, [](const V& x) { return concat(x, 1); });
    simple("to_tokens", {vol}, [](const V& x) { return to_tokens(x[0]); });
    simple("to_volume", {{2, 60, 3}}, [](const V& x) { return to_volume(x[0], {4, 5, 3}); });
    simple("pad_spatial", {vol}, [](const V& x) { return pad_spatial(x[0], {5, 8, 4}); });
    simple("crop_spatial", {vol}, [](const V& x) { return crop_spatial(x[0], {3, 2, 3}); });
    simple("conv3d", {{2, 3, 5, 4, 6}, {4, 3, 3, 3, 3}, {4}}, [](const V& x) { return conv3d(x[0], x[1], x[2], 1, 1); });
    simple("conv3d_strided", {{1, 2, 6, 5, 7}, {3, 2, 3, 3, 3}, {3}}, [](const V& x) { return conv3d(x[0], x[1], x[2], 2, 1); });
    simple("conv3d_grouped", {{1, 4, 4, 4, 4}, {4, 1, 3, 3, 3}, {4}}, [](const V& x) { return conv3d(x[0], x[1], x[2], 1, 1, 4); });
    simple("conv_transpose3d", {{2, 3, 3, 2, 3}, {3, 2, 2, 2, 2}, {2}},
           [](const V& x) { return conv_transpose3d(x[0], x[1], x[2], 2); });
    simple("avg_pool3d", {vol}, [](const V& x) { return avg_pool3d(x[0], 3, 1, 1); });
    simple("linear", {{2, 5, 4}, {3, 4}, {3}}, [](const V& x) { return linear(x[0], x[1], x[2]); });
    simple("layer_norm", {{2, 5, 6}, {6}, {6}}, [](const V& x) { return layer_norm(x[0], x[1], x[2]); });
    simple("batch_norm", {vol, {3}, {3}}, [](const V& x) {
      BatchNormStats s = BatchNormStats::make(3);
      return batch_norm(x[0], x[1], x[2], s, true);
    });
    simple("instance_norm", {vol, {3}, {3}}, [](const V& x) { return instance_norm(x[0], x[1], x[2]); });
    simple("gelu", {{4, 5}}, [](const V& x) { return gelu(x[0]); });
    simple("prelu", {{2, 3, 4}, {3}}, [](const V& x) { return prelu(x[0], x[1]); });
    simple("softmax", {{2, 3, 5}}, [](const V& x) { return softmax(x[0]); });
    m["softmax_masked"] = [](Rng& rng) {
      Tensor mask({3, 5});
      mask.at({0, 4}) = kMaskValue;
      mask.at({2, 1}) = kMaskValue;
      return of_inputs("softmax_masked", {leaf({2, 3, 5}, rng)}, [mask](const V& x) { return softmax(x[0], mask); }, rng);
    };
    m["window_attention"] = [](Rng& rng) {
      Tensor mask({2, 8, 8});
      for (Index i = 0; i < 8; ++i)
        for (Index j = 0; j < 8; ++j) mask.at({1, i, j}) = (i < 4) == (j < 4) ? 0.0 : kMaskValue;
      return of_inputs("window_attention", {leaf({4, 8, 12}, rng), leaf({2, 8, 8}, rng)},
                       [mask](const V& x) { return window_attention(x[0], 2, x[1], mask, 0.5); }, rng);
    };
    simple("cyclic_shift", {vol}, [](const V& x) { return cyclic_shift(x[0], {1, 2, 1}, ShiftDirection::forward); });
    simple("window_partition", {{1, 2, 4, 4, 6}}, [](const V& x) { return window_partition(x[0], 2); });
    simple("window_reverse", {{12, 8, 2}}, [](const V& x) { return window_reverse(x[0], 1, {4, 4, 6}, 2); });
    m["relative_position_bias"] = [](Rng& rng) {
      auto p = std::make_shared<AttentionParams>(AttentionParams::make(4, 2, 2, true, rng));
      p->rel_bias_table.set_requires_grad(true);
      GradFragment g = of_inputs("relative_position_bias", {}, [p](const V&) { return relative_position_bias(*p, {2, 2, 2}); }, rng);
      g.wrt.push_back({"rel_bias_table", p->rel_bias_table});
      return g;
    };
    m["w_mhsa_shifted"] = [](Rng& rng) {
      auto p = std::make_shared<AttentionParams>(AttentionParams::make(4, 2, 2, true, rng));
      return of_module<AttentionParams>("w_mhsa_shifted", p, leaf({1, 4, 4, 4, 3}, rng),
                                        [](AttentionParams& a, const Tensor& x) { return w_mhsa(x, a, WindowSpec::shifted(2)); }, rng);
    };
    m["patch_embed"] = [](Rng& rng) {
      ModelConfig c = ModelConfig::toy();
      c.base_dim = 3;
      c.heads = {1, 1, 1, 1};
      auto e = std::make_shared<Encoder>();
      e->config = c;
      e->embed = ConvParams::make(1, 3, 2, rng);
      GradFragment g = of_inputs("patch_embed", {leaf({1, 1, 4, 4, 6}, rng)},
                                 [e](const V& x) { return e->patch_embed(x[0]); }, rng);
      for (auto& p : trainable({{"embed.weight", e->embed.weight}, {"embed.bias", e->embed.bias}})) g.wrt.push_back(p);
      return g;
    };
    for (auto kind : {MergeKind::linear, MergeKind::conv}) {
      const std::string name = "patch_merge_" + to_string(kind);
      m[name] = [name, kind](Rng& rng) {
        auto pm = std::make_shared<PatchMerge>(PatchMerge::make(kind, 3, rng));
        return of_module<PatchMerge>(name, pm, leaf({1, 3, 4, 2, 4}, rng), [](PatchMerge& p, const Tensor& x) { return p.forward(x); }, rng);
      };
    }
    m["conv_block"] = [](Rng& rng) {
      auto cb = std::make_shared<ConvBlock>(ConvBlock::make(3, 4, 3, rng));
      return of_module<ConvBlock>("conv_block", cb, leaf({2, 3, 3, 4, 3}, rng),
                                  [](ConvBlock& b, const Tensor& x) { return b.forward(x, true); }, rng);
    };
    auto ff = [&](const std::string& name, FeedForwardKind kind) {
      m[name] = [name, kind](Rng& rng) {
        BlockConfig cfg;
        cfg.channels = 8;
        cfg.heads = 2;
        cfg.ff_kind = kind;
        cfg.mlp_ratio = 2.0;
        auto f = std::make_shared<FeedForward>(make_feed_forward(cfg, rng));
        struct Holder {
          std::shared_ptr<FeedForward> ff;
          void collect(const std::string& prefix, ParamList& out) const {
            std::visit([&](const auto& v) { v.collect(prefix, out); }, *ff);
          }
        };
        auto h = std::make_shared<Holder>(Holder{f});
        return of_module<Holder>(name, h, leaf({2, 36, 8}, rng),
                                 [](Holder& hh, const Tensor& x) { return feed_forward(*hh.ff, x, {3, 4, 3}, true); }, rng);
      };
    };
    ff("inception_ff", FeedForwardKind::inception);
    ff("mlp_ff", FeedForwardKind::mlp);
    ff("depthwise_ff", FeedForwardKind::depthwise);
    m["swinception_block"] = [](Rng& rng) {
      BlockConfig cfg;
      cfg.channels = 8;
      cfg.heads = 2;
      cfg.window = 2;
      auto blk = std::make_shared<SwinceptionBlock>(SwinceptionBlock::make(cfg, rng));
      return of_module<SwinceptionBlock>("swinception_block", blk, leaf({1, 48, 8}, rng),
                                         [](SwinceptionBlock& b, const Tensor& x) {
                                           return b.forward(x, {4, 4, 3}, WindowSpec::shifted(2), true);
                                         },
                                         rng);
    };
    m["residual_block"] = [](Rng& rng) {
      auto rb = std::make_shared<ResidualBlock>(ResidualBlock::make(3, 4, rng));
      return of_module<ResidualBlock>("residual_block", rb, leaf({1, 3, 3, 4, 3}, rng),
                                      [](ResidualBlock& r, const Tensor& x) { return r.forward(x); }, rng);
    };
    m["upsample_block"] = [](Rng& rng) {
      auto ub = std::make_shared<UpsampleBlock>(UpsampleBlock::make(3, 2, rng));
      return of_module<UpsampleBlock>("upsample_block", ub, leaf({1, 3, 2, 3, 2}, rng),
                                      [](UpsampleBlock& u, const Tensor& x) { return u.forward(x); }, rng);
    };
    m["dice_ce_loss"] = [](Rng& rng) {
      Tensor labels({2, 3, 2, 2});
      for (double& v : labels.data()) v = static_cast<double>(rng.uniform_int(0, 2));
      GradFragment g;
      g.name = "dice_ce_loss";
      Tensor logits = leaf({2, 3, 3, 2, 2}, rng);
      g.wrt.push_back({"logits", logits});
      g.loss = [logits, labels] { return dice_ce_loss(logits, labels); };
      return g;
    };
    m["full_model"] = [](Rng& rng) {
      ModelConfig c = ModelConfig::toy();
      c.base_dim = 4;
      c.heads = {1, 2, 4, 8};
      auto model = std::make_shared<SegmentationModel>(SegmentationModel::make(c, rng.next()));
      Tensor x({1, 1, 32, 32, 32});
      rng.fill_normal(x, 0.0, 1.0);
      x.set_requires_grad(true);
      Tensor labels({1, 32, 32, 32});
      for (double& v : labels.data()) v = static_cast<double>(rng.uniform_int(0, c.num_classes - 1));
      GradFragment g;
      g.name = "full_model";
      g.wrt.push_back({"input", x});
      for (auto& p : trainable(model->parameters())) g.wrt.push_back(p);
      g.loss = [model, x, labels] { return dice_ce_loss(model->forward(x), labels); };
      g.options.max_coords = 1;
      return g;
    };
    return m;
  }();
  return b;
}

}  // namespace

std::vector<std::string> grad_fragment_names() {
  std::vector<std::string> names;
  for (const auto& [name, builder] : grad_builders()) names.push_back(name);
  return names;
}

GradFragment make_grad_fragment(const std::string& name, std::uint64_t seed) {
  const auto& b = grad_builders();
  const auto it = b.find(name);
  if (it == b.end()) throw ConfigError("unknown gradient fragment '" + name + "'");
  Rng rng(seed);
  GradFragment g = it->second(rng);
  g.options.seed = seed;
  return g;
}

namespace {

constexpr Index kProbeChannels = 8;
constexpr Index kProbeEdge = 12;
constexpr Index kProbeWindow = 4;

BlockConfig probe_block(FeedForwardKind kind) {
  BlockConfig cfg;
  cfg.channels = kProbeChannels;
  cfg.heads = 2;
  cfg.window = kProbeWindow;
  cfg.ff_kind = kind;
  return cfg;
}

// Volume-level wrapper around a stack of blocks with the given shifts.
std::function<Tensor(const Tensor&)> block_stack(std::shared_ptr<std::vector<SwinceptionBlock>> blocks,
                                                  std::vector<WindowSpec> specs) {
  auto run = [blocks, specs](const Tensor& x, bool training) {
    const Dims3 dims{x.dim(2), x.dim(3), x.dim(4)};
    Tensor t = to_tokens(x);
    for (size_t i = 0; i < blocks->size(); ++i) t = (*blocks)[i].forward(t, dims, specs[i], training);
    return to_volume(t, dims);
  };
  return [run](const Tensor& x) { return run(x, false); };
}

}  // namespace

std::vector<std::string> probe_fragment_names() {
  return {"mlp_ff", "inception_ff", "depthwise_ff", "w_mhsa", "w_mhsa_shifted", "swin_block", "swinception_block", "two_blocks"};
}

ProbeFragment make_probe_fragment(const std::string& name, std::uint64_t seed) {
  Rng rng(seed);
  ProbeFragment p;
  p.name = name;
  p.input_shape = {1, kProbeChannels, kProbeEdge, kProbeEdge, kProbeEdge};
  p.source = {5, 6, 5};
  const Dims3 dims{kProbeEdge, kProbeEdge, kProbeEdge};

  // Populates batch-norm statistics with one training pass on noise.
  auto warm = [&](const std::function<void(const Tensor&)>& f) {
    NoGradGuard guard;
    Tensor x(p.input_shape);
    rng.fill_normal(x, 0.0, 1.0);
    f(x);
  };

  auto ff_kind = [](const std::string& n) -> std::optional<FeedForwardKind> {
    if (n == "mlp_ff") return FeedForwardKind::mlp;
    if (n == "inception_ff") return FeedForwardKind::inception;
    if (n == "depthwise_ff") return FeedForwardKind::depthwise;
    return std::nullopt;
  };

  if (const auto kind = ff_kind(name)) {
    auto ff = std::make_shared<FeedForward>(make_feed_forward(probe_block(*kind), rng));
    auto run = [ff, dims](const Tensor& x, bool training) { return to_volume(feed_forward(*ff, to_tokens(x), dims, training), dims); };
    warm([&](const Tensor& x) { run(x, true); });
    p.apply = [run](const Tensor& x) { return run(x, false); };
    return p;
  }
  if (name == "w_mhsa" || name == "w_mhsa_shifted") {
    auto a = std::make_shared<AttentionParams>(AttentionParams::make(kProbeChannels, 2, kProbeWindow, true, rng));
    const WindowSpec spec = name == "w_mhsa" ? WindowSpec::regular(kProbeWindow) : WindowSpec::shifted(kProbeWindow);
    p.apply = [a, spec](const Tensor& x) { return w_mhsa(x, *a, spec); };
    p.window = kProbeWindow;
    return p;
  }
  std::vector<FeedForwardKind> kinds;
  std::vector<WindowSpec> specs;
  if (name == "swin_block") {
    kinds = {FeedForwardKind::mlp};
    specs = {WindowSpec::regular(kProbeWindow)};
  } else if (name == "swinception_block") {
    kinds = {FeedForwardKind::inception};
    specs = {WindowSpec::regular(kProbeWindow)};
  } else if (name == "two_blocks") {
    kinds = {FeedForwardKind::mlp, FeedForwardKind::mlp};
    specs = {WindowSpec::regular(kProbeWindow), WindowSpec::shifted(kProbeWindow)};
  } else {
    throw ConfigError("unknown probe fragment '" + name + "'");
  }
  auto blocks = std::make_shared<std::vector<SwinceptionBlock>>();
  for (auto k : kinds) blocks->push_back(SwinceptionBlock::make(probe_block(k), rng));
  warm([&](const Tensor& x) {
    const Dims3 d{x.dim(2), x.dim(3), x.dim(4)};
    Tensor t = to_tokens(x);
    for (size_t i = 0; i < blocks->size(); ++i) t = (*blocks)[i].forward(t, d, specs[i], true);
  });
  p.apply = block_stack(blocks, specs);
  p.window = kProbeWindow;
  return p;
}

}  // namespace swinc
