#include "stripereid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stripereid/rng.hpp"

namespace stripereid {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (const auto extent : shape) {
    if (extent <= 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  for (const double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor values must be finite");
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor make_tensor(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), false);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(shape, std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::randn(const Shape& shape, std::uint64_t seed) {
  const auto n = shape_numel(shape);
  SplitMix64 rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.normal();
  return Tensor(shape, std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::size(std::int64_t axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<std::int64_t>(s.size());
  if (axis < 0 || axis >= static_cast<std::int64_t>(s.size())) {
    throw ShapeError("axis out of range for shape " + shape_to_string(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(values().size()); }

std::span<const double> Tensor::values() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  const auto v = values();
  if (v.size() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_to_string(shape()));
  return v[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.clear();
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw TapeError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()));
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

bool Tape::should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t != nullptr && t->requires_grad(); });
}

bool Tape::should_record(std::span<const Tensor> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::record(const Tensor& output, BackwardFn fn) {
  if (consumed_) throw TapeError("cannot record on a tape that was already replayed; call reset()");
  output.impl_->requires_grad = true;
  nodes_.push_back(Node{output.impl_, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("tape already replayed; call reset() before another backward pass");
  if (!loss.defined() || loss.numel() != 1) throw TapeError("backward() requires a scalar loss");
  const auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                               [&](const Node& n) { return n.output == loss.impl_; });
  if (it == nodes_.rend()) throw TapeError("loss was not produced on this tape");

  consumed_ = true;
  loss.impl_->grad_buffer()[0] += 1.0;
  for (auto node = it; node != nodes_.rend(); ++node) {
    if (node->output->grad.empty()) continue;  // not reachable from the loss
    node->fn(node->output->grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

void record_op(const Tensor& output, std::initializer_list<const Tensor*> inputs, Tape::BackwardFn fn) {
  if (Tape::should_record(inputs)) Tape::active()->record(output, std::move(fn));
}

}  // namespace stripereid
