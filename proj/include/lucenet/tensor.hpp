#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lucenet/error.hpp"

namespace lucenet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class BasicTape;

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<T>> storage;
  std::optional<std::vector<T>> grad;
  bool requires_grad = false;
  // Identity of the tape that produced this value; 0 for leaves.
  std::uint64_t tape_id = 0;
};

}  // namespace detail

/// N-dimensional row-major array with an optional gradient buffer.
///
/// Copies are shallow: two BasicTensor objects may refer to the same node.
/// `clone()` makes an independent leaf, `detached()` shares the values but
/// drops gradient tracking.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  /// Zero-filled tensor. Throws ShapeError for empty shapes or zero dims.
  explicit BasicTensor(Shape shape);
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor filled(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->storage->size(); }

  std::span<const T> data() const { return *node_->storage; }
  /// Direct write access for leaves (parameters, inputs). Values produced by
  /// a tape must not be modified while that tape is alive.
  std::span<T> mutable_data() { return *node_->storage; }
  T item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const noexcept { return node_ && node_->grad.has_value(); }
  std::span<const T> grad() const;
  /// Gradient buffer, allocated zero-filled on first use.
  std::span<T> grad_accumulator();
  void zero_grad();
  void clear_grad();

  BasicTensor detached() const;
  BasicTensor clone() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> values(numel());
    auto src = data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<U>(src[i]);
    return BasicTensor<U>(shape(), std::move(values), requires_grad());
  }

  /// Same node (not same values).
  bool same_node(const BasicTensor& other) const noexcept { return node_ == other.node_; }
  std::uint64_t producer() const noexcept { return node_ ? node_->tape_id : 0; }

 private:
  friend class BasicTape<T>;
  explicit BasicTensor(std::shared_ptr<detail::TensorNode<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode<T>> node_;
};

/// Ordered record of executed operations. Ops append entries in execution
/// order, so inputs always precede their consumers; `backward` replays the
/// record in reverse, visiting each entry once.
///
/// A tape and the values it produced are confined to one thread.
template <typename T>
class BasicTape {
 public:
  using Tensor = BasicTensor<T>;
  /// Receives the gradient of the op's output; accumulates into the inputs
  /// it captured (via `grad_accumulator`).
  using BackwardFn = std::function<void(std::span<const T> output_grad)>;

  BasicTape();
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  /// Wraps freshly computed values as the output of `op`. Throws
  /// NumericError if any value is non-finite. When `tracked` is false (no
  /// input requires a gradient) the result is a constant and `backward` is
  /// dropped.
  Tensor record(std::string_view op, Shape shape, std::vector<T> values, bool tracked,
                BackwardFn backward);

  /// Populates `grad` on every tensor reachable from `loss` that requires it.
  void backward(const Tensor& loss);

  /// Drops all entries; tensors produced earlier become detached.
  void reset();

  std::size_t size() const noexcept { return entries_.size(); }
  std::uint64_t id() const noexcept { return id_; }
  bool owns(const Tensor& t) const noexcept { return t.defined() && t.producer() == id_; }

  /// Piecewise ops (relu, clamps) fold their branch decisions into a running
  /// hash while tracking is enabled. Finite-difference checks use it to detect
  /// a perturbation that crossed a kink.
  void set_branch_tracking(bool enabled) noexcept { track_branches_ = enabled; }
  bool branch_tracking() const noexcept { return track_branches_; }
  void note_branch(std::uint64_t value) noexcept;
  std::uint64_t branch_signature() const noexcept { return branch_hash_; }

  /// Test hook: scales the output gradient fed to every backward rule of
  /// `op`, which corrupts all gradients upstream of it.
  void inject_backward_fault(std::string op, T scale);

 private:
  struct Entry {
    std::string op;
    std::shared_ptr<detail::TensorNode<T>> output;
    BackwardFn backward;
  };

  std::uint64_t id_;
  std::vector<Entry> entries_;
  bool backward_done_ = false;
  bool track_branches_ = false;
  std::uint64_t branch_hash_ = 0;
  std::optional<std::pair<std::string, T>> fault_;
};

using Tensor = BasicTensor<float>;
using Tape = BasicTape<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class BasicTape<float>;
extern template class BasicTape<double>;

}  // namespace lucenet
