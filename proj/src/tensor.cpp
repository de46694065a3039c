#include "scalpel/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace scalpel {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) +
                                " does not match " + std::to_string(values.size()) +
                                " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::span<float> Tensor::grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

std::span<const float> Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf() && !flag) {
    throw std::logic_error("cannot clear requires_grad on a non-leaf tensor");
  }
  impl_->requires_grad = flag;
}

float Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw std::logic_error("item() on tensor of shape " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, const char* op,
                   std::initializer_list<const Tensor*> inputs) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  impl->shape = std::move(shape);
  impl->op = op;
  if (g_grad_enabled) {
    for (const Tensor* in : inputs) {
      if (in && in->defined() && in->requires_grad()) {
        impl->requires_grad = true;
        impl->parents.push_back(in->impl_ptr());
      }
    }
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, const char* op, std::span<const Tensor> inputs) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  impl->shape = std::move(shape);
  impl->op = op;
  if (g_grad_enabled) {
    for (const Tensor& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        impl->requires_grad = true;
        impl->parents.push_back(in.impl_ptr());
      }
    }
  }
  return Tensor(std::move(impl));
}

void set_backward(Tensor& out, std::function<void(detail::TensorImpl&)> fn) {
  if (out.requires_grad()) out.impl()->backward_fn = std::move(fn);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS yields a topological order (inputs before outputs).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  visited.insert(loss.impl());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorImpl* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::TensorImpl* node : order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), 0.0f);
    else node->ensure_grad();
  }
  loss.impl()->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace scalpel
