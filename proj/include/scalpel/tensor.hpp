#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scalpel {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until the first backward pass reaches it
  bool requires_grad = false;

  // Graph linkage. Leaves have no parents and no backward function.
  const char* op = nullptr;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl& self)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

}  // namespace detail

/// Dense float32 array with an optional gradient slot.
///
/// Tensors are shared handles: copying a Tensor aliases the same buffer.
/// Operations in ops.hpp record themselves on the output when any input
/// requires a gradient, forming a dynamic graph that backward() walks.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim(size_t i) const { return impl_->shape.at(i); }
  size_t rank() const { return impl_->shape.size(); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<float> data() { return impl_->data; }
  std::span<const float> data() const { return impl_->data; }
  float* ptr() { return impl_->data.data(); }
  const float* ptr() const { return impl_->data.data(); }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->backward_fn == nullptr; }
  const char* op_name() const { return impl_->op; }

  float item() const;
  /// Deep copy detached from the graph.
  Tensor clone() const;
  /// Same storage values, new leaf without history.
  Tensor detach() const { return clone(); }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, const char*,
                            std::initializer_list<const Tensor*>);
  friend Tensor make_result(Shape, const char*, std::span<const Tensor>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Allocates an op output. If any input requires a gradient the output is
/// linked to the inputs and marked as requiring one too; the caller then
/// installs the backward closure with set_backward().
Tensor make_result(Shape shape, const char* op,
                   std::initializer_list<const Tensor*> inputs);
Tensor make_result(Shape shape, const char* op, std::span<const Tensor> inputs);
void set_backward(Tensor& out, std::function<void(detail::TensorImpl&)> fn);

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
/// intermediate gradients are recomputed each pass.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace scalpel
