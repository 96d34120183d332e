#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cocgan/error.hpp"

namespace cocgan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// 64-byte aligned storage, so vectorized kernels see the same alignment (and
// therefore the same summation order) on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <class T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  // Reads this node's grad and accumulates into the captured inputs.
  std::function<void(Node&)> backward;
  std::ptrdiff_t tape_pos = -1;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// Handle to a value in the differentiation graph. Copies alias the same node.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, const std::vector<T>& data, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer<T>(data.begin(), data.end()), requires_grad) {}
  Tensor(Shape shape, std::initializer_list<T> data, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer<T>(data), requires_grad) {}
  Tensor(Shape shape, Buffer<T> data, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    if (numel(shape) != data.size())
      throw ConfigError("tensor: shape " + cocgan::to_string(shape) + " needs " +
                        std::to_string(numel(shape)) + " values, got " +
                        std::to_string(data.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), Buffer<T>(n, T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), Buffer<T>(n, v), requires_grad);
  }
  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 1 ? 1 : dim(0); }
  std::size_t cols() const { return rank() == 1 ? dim(0) : dim(1); }

  std::span<const T> data() const { return node_->value; }
  // Direct write access; meant for parameters and inputs, not recorded values.
  std::span<T> mutable_data() { return node_->value; }
  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + cocgan::to_string(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values with no graph history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// Disables recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Define-by-run record of every node created while some input required grad.
// Recording order is a topological order, so backward is a reverse scan.
template <class T>
class Tape {
 public:
  void record(const std::shared_ptr<Node<T>>& n) {
    n->tape_pos = static_cast<std::ptrdiff_t>(nodes_.size());
    nodes_.push_back(n);
  }

  void backward(const Tensor<T>& root) {
    if (!root.defined() || root.size() != 1)
      throw ContractError("backward: root must be a scalar, got shape " +
                          (root.defined() ? cocgan::to_string(root.shape()) : std::string("<undefined>")));
    Node<T>* r = root.node();
    if (!r->requires_grad) return;
    r->ensure_grad();
    r->grad[0] += T(1);
    if (r->tape_pos < 0) return;  // leaf root
    if (static_cast<std::size_t>(r->tape_pos) >= nodes_.size() || nodes_[r->tape_pos].get() != r)
      throw ContractError("backward: root is not recorded on this thread's tape");
    for (std::ptrdiff_t i = r->tape_pos; i >= 0; --i) {
      Node<T>& n = *nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(n);
      // Intermediate gradients are consumed; only leaves accumulate.
      n.grad.clear();
    }
  }

  void clear() {
    for (auto& n : nodes_) {
      n->backward = nullptr;
      n->tape_pos = -1;
    }
    nodes_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

template <class T>
Tape<T>& active_tape() {
  thread_local Tape<T> tape;
  return tape;
}

template <class T>
void backward(const Tensor<T>& root) {
  active_tape<T>().backward(root);
}

namespace detail {

template <class T>
Tensor<T> make_result(Shape shape) {
  return Tensor<T>::zeros(std::move(shape));
}

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> xs) {
  if (!grad_enabled()) return false;
  for (const auto* x : xs)
    if (x && x->defined() && x->requires_grad()) return true;
  return false;
}

// Marks `out` as differentiable and records it with its backward rule.
template <class T>
void attach(Tensor<T>& out, std::function<void(Node<T>&)> fn) {
  out.set_requires_grad(true);
  out.node()->backward = std::move(fn);
  active_tape<T>().record(out.ptr());
}

// Grad buffer of an input, or nullptr when it does not take gradients.
template <class T>
T* grad_of(const std::shared_ptr<Node<T>>& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

}  // namespace detail
}  // namespace cocgan
