#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace swinc {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

/// One recorded operation. `backward` reads the gradient of the tensor that
/// owns this node and accumulates into the gradients of `inputs`.
struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  std::function<void(const detail::TensorImpl& out)> backward;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data once allocated
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};
}  // namespace detail

/// Dense row-major array of doubles with optional gradient.
///
/// `Tensor` is a shared handle: copies alias the same storage, the way
/// parameters are shared between a model and its optimizer. Use `clone()`
/// for an independent copy. Forward ops called while gradient recording is
/// enabled and with at least one `requires_grad` input append a TapeNode to
/// their result; `backward()` on a scalar walks those nodes in reverse
/// topological order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  // Negative axes count from the back.
  Index dim(int axis) const;
  Index numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::initializer_list<Index> idx) const;
  double& at(std::initializer_list<Index> idx);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, no tape, no grad.
  Tensor detach() const;
  Tensor clone() const { return detach(); }
  bool is_leaf() const;
  const TapeNode* node() const;

  /// Reverse-mode sweep from this scalar. Gradients accumulate.
  void backward() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl);

 private:
  Index flat_index(std::initializer_list<Index> idx) const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace swinc
