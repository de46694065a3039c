#include "scalpel/optim.hpp"

namespace scalpel {

void sgd_step(std::span<Parameter> params, float learning_rate) {
  for (Parameter& p : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    auto data = p.tensor.data();
    auto grad = p.tensor.grad();
    for (size_t i = 0; i < data.size(); ++i) data[i] -= learning_rate * grad[i];
  }
  zero_grads(params);
}

void zero_grads(std::span<Parameter> params) {
  for (Parameter& p : params) p.tensor.zero_grad();
}

}  // namespace scalpel
