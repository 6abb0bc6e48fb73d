#include "swinc/optim.hpp"

#include <cmath>
#include <utility>

#include "swinc/errors.hpp"

namespace swinc {

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  long step, const AdamWOptions& o) {
  if (m.size() != param.size() || v.size() != param.size() || (!grad.empty() && grad.size() != param.size())) {
    throw StateError("adamw: optimizer state does not match parameter size " + std::to_string(param.size()));
  }
  if (step < 1) throw StateError("adamw: step must be >= 1");
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  const double decay = 1.0 - o.lr * o.weight_decay;
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    param[i] *= decay;
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    param[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
  }
}

AdamW::AdamW(ParamList params, AdamWOptions options) : options_(options) {
  for (auto& p : params) {
    if (!p.trainable) continue;
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
    params_.push_back(std::move(p));
  }
}

void AdamW::step() {
  ++step_;
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    std::span<const double> g;
    if (t.has_grad()) g = std::as_const(t).grad();
    adamw_update(t.data(), g, m_[i], v_[i], step_, options_);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace swinc
