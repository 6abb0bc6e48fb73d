#include "swinc/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "swinc/errors.hpp"

namespace swinc {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (Index e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

thread_local bool g_grad_enabled = true;
}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  check_shape(shape);
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (static_cast<Index>(values.size()) != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::from_impl(std::shared_ptr<detail::TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

Index Tensor::dim(int axis) const {
  const Shape& s = shape();
  const int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("axis out of range for shape " + shape_str(s));
  return s[static_cast<std::size_t>(axis)];
}

Index Tensor::numel() const { return static_cast<Index>(impl_ ? impl_->data.size() : 0); }

std::span<double> Tensor::data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

Index Tensor::flat_index(std::initializer_list<Index> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw DimensionError("index rank does not match shape " + shape_str(s));
  Index flat = 0;
  std::size_t i = 0;
  for (Index v : idx) {
    if (v < 0 || v >= s[i]) throw DimensionError("index out of range for shape " + shape_str(s));
    flat = flat * s[i] + v;
    ++i;
  }
  return flat;
}

double Tensor::at(std::initializer_list<Index> idx) const {
  return impl_->data[static_cast<std::size_t>(flat_index(idx))];
}

double& Tensor::at(std::initializer_list<Index> idx) {
  return impl_->data[static_cast<std::size_t>(flat_index(idx))];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->requires_grad = on;
  if (on) {
    impl_->ensure_grad();
  } else {
    impl_->grad.clear();
  }
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }

std::span<double> Tensor::grad() {
  if (!has_grad()) throw StateError("tensor has no gradient buffer");
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient buffer");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data); }

bool Tensor::is_leaf() const { return !impl_ || !impl_->node; }

const TapeNode* Tensor::node() const { return impl_ ? impl_->node.get() : nullptr; }

void Tensor::backward() const {
  if (!impl_) throw ContractError("backward() on undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) throw ContractError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS; a grey node reached again means a cycle.
  enum class Mark { grey, black };
  std::unordered_map<const detail::TensorImpl*, Mark> marks;
  std::vector<detail::TensorImpl*> order;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  marks[impl_.get()] = Mark::grey;
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    static const std::vector<std::shared_ptr<detail::TensorImpl>> kNoInputs;
    const auto& inputs = cur->node ? cur->node->inputs : kNoInputs;
    if (next < inputs.size()) {
      detail::TensorImpl* child = inputs[next++].get();
      if (!child->requires_grad) continue;
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks[child] = Mark::grey;
        stack.emplace_back(child, 0);
      } else if (it->second == Mark::grey) {
        throw InternalError("autodiff tape contains a cycle");
      }
      continue;
    }
    marks[cur] = Mark::black;
    order.push_back(cur);
    stack.pop_back();
  }

  for (detail::TensorImpl* t : order) t->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (t->node && t->node->backward) t->node->backward(*t);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace swinc
