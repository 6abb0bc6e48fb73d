#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "swinc/errors.hpp"
#include "swinc/tensor.hpp"

namespace swinc::detail {

using BackwardFn = std::function<void(const TensorImpl& out)>;

inline void check_finite(std::string_view op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

/// Wraps freshly computed forward values into a tensor and, when needed,
/// records the node. `backward` is only attached if some input needs grad.
inline Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                          std::vector<Tensor> inputs, BackwardFn backward) {
  check_finite(op, values);
  Tensor out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<TapeNode>();
  node->op = std::move(op);
  for (const Tensor& t : inputs) {
    if (t.defined()) node->inputs.push_back(t.impl());
  }
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->node = std::move(node);
  return out;
}

// Gradient buffer of an input, or nullptr when it does not take gradients.
inline double* grad_of(const std::shared_ptr<TensorImpl>& t) {
  if (!t || !t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

}  // namespace swinc::detail
