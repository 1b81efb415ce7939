#include "lucenet/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "lucenet/rng.hpp"

namespace lucenet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor shape " + shape_string(shape) + " has a zero dimension");
  }
}

std::atomic<std::uint64_t> next_tape_id{1};

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : BasicTensor(shape, std::vector<T>(shape_numel(shape))) {}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n), requires_grad);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad) {
  validate_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::TensorNode<T>>();
  node_->shape = std::move(shape);
  node_->storage = std::make_shared<std::vector<T>>(std::move(values));
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::filled(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!node_) throw ShapeError("use of an undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(shape()));
  return (*node_->storage)[0];
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) return {};
  return *node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::grad_accumulator() {
  if (!node_->grad) node_->grad.emplace(numel(), T(0));
  return *node_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_->grad) std::fill(node_->grad->begin(), node_->grad->end(), T(0));
}

template <typename T>
void BasicTensor<T>::clear_grad() {
  node_->grad.reset();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detached() const {
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = shape();
  node->storage = node_->storage;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(shape(), *node_->storage, requires_grad());
}

template <typename T>
BasicTape<T>::BasicTape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
BasicTensor<T> BasicTape<T>::record(std::string_view op, Shape shape, std::vector<T> values,
                                    bool tracked, BackwardFn backward) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite value in output " + shape_string(shape) +
                         " at flat index " + std::to_string(i));
    }
  }
  Tensor out(std::move(shape), std::move(values), tracked);
  out.node_->tape_id = id_;
  if (tracked) entries_.push_back(Entry{std::string(op), out.node_, std::move(backward)});
  return out;
}

template <typename T>
void BasicTape<T>::backward(const Tensor& loss) {
  if (backward_done_) throw AutodiffError("backward called twice on the same tape without reset");
  if (!loss.defined() || loss.numel() != 1) {
    throw AutodiffError("backward root must be a scalar tensor");
  }
  if (!owns(loss) || !loss.requires_grad()) {
    throw AutodiffError("backward root is detached: it was not produced by this tape from any "
                        "tensor that requires a gradient");
  }
  backward_done_ = true;
  loss.node_->grad.emplace(1, T(1));

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto& out = *it->output;
    if (!out.grad) continue;  // not on any path from the root
    std::span<const T> g = *out.grad;
    std::vector<T> faulty;
    if (fault_ && fault_->first == it->op) {
      faulty.assign(g.begin(), g.end());
      for (auto& v : faulty) v *= fault_->second;
      g = faulty;
    }
    it->backward(g);
  }
}

template <typename T>
void BasicTape<T>::reset() {
  entries_.clear();
  id_ = next_tape_id.fetch_add(1);
  backward_done_ = false;
  branch_hash_ = 0;
}

template <typename T>
void BasicTape<T>::note_branch(std::uint64_t value) noexcept {
  if (track_branches_) branch_hash_ = mix64(branch_hash_ ^ value);
}

template <typename T>
void BasicTape<T>::inject_backward_fault(std::string op, T scale) {
  fault_.emplace(std::move(op), scale);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace lucenet
