#pragma once

#include <span>
#include <vector>

#include "swinc/params.hpp"

namespace swinc {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Adam with decoupled weight decay: p <- p * (1 - lr * wd), then the
/// bias-corrected Adam step. Tensors without a gradient are treated as
/// having a zero gradient.
class AdamW {
 public:
  AdamW(ParamList params, AdamWOptions options);

  void step();
  void zero_grad();
  long steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  ParamList params_;
  AdamWOptions options_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

/// One update of a single tensor's values. Shapes of all spans must agree
/// (StateError otherwise); `step` is 1-based.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  long step, const AdamWOptions& o);

}  // namespace swinc
