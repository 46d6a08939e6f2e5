#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smallbench {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Incompatible operand shapes. The message names every shape involved.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of the differentiation graph (non-scalar root, consumed graph, ...).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Reads the output's grad and accumulates into the inputs.
  std::function<void(TensorImpl<T>&)> backward;
  bool consumed = false;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor that records the operations applied to it so that
/// `backward()` on a scalar result populates `grad()` on every tensor that
/// requires it.
///
/// Copies are shallow handles: two `BasicTensor` copies alias the same
/// storage. Use `detach()` for a deep copy outside the graph.
///
/// A graph can be differentiated once. Calling `backward()` again on a root
/// whose graph was consumed throws `GraphError`. Leaf grads accumulate
/// across separate graphs until `zero_grad()`.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  /// Writable view of the values. Only meaningful on leaves (parameters,
  /// inputs); editing an interior node does not re-run the graph.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return !impl_->node; }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad();

  void backward() const;

  /// Deep copy of the values, disconnected from any graph.
  BasicTensor detach() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(impl_->data[i]);
    return BasicTensor<U>(shape(), std::move(out), requires_grad());
  }

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }
  static BasicTensor from_impl(std::shared_ptr<detail::TensorImpl<T>> impl) {
    BasicTensor t;
    t.impl_ = std::move(impl);
    return t;
  }

  /// True when both handles refer to the same storage.
  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace smallbench
