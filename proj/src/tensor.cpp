#include "smallbench/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace smallbench {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values but " + std::to_string(data.size()) + " were given");
  impl_ = std::make_shared<detail::TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw GraphError("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = on;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), impl_->data, false);
}

template <typename T>
void BasicTensor<T>::backward() const {
  using Impl = detail::TensorImpl<T>;
  if (!impl_) throw GraphError("backward() on an undefined tensor");
  if (numel() != 1) throw GraphError("backward() needs a scalar root, got shape " + shape_str(shape()));
  if (!impl_->requires_grad) throw GraphError("backward() on a tensor that does not require grad");
  if (impl_->node && impl_->node->consumed)
    throw GraphError("backward() called twice on the same graph; rebuild the forward pass first");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    if (cur->node && next < cur->node->inputs.size()) {
      Impl* child = cur->node->inputs[next++].get();
      if (child->node && child->node->consumed)
        throw GraphError("backward() reached a node whose graph was already consumed");
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }

  impl_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* t = *it;
    if (!t->node) continue;
    t->grad_buffer();
    t->node->backward(*t);
  }
  // Release closures and input references; keep the consumed marker.
  for (Impl* t : order) {
    if (!t->node) continue;
    t->node->backward = nullptr;
    t->node->inputs.clear();
    t->node->consumed = true;
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace smallbench
