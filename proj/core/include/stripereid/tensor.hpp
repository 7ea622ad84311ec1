#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stripereid {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raised on incompatible extents (mismatched operands, invalid windows).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would produce NaN or Inf.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised on misuse of the gradient tape.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;

  /// Returns the gradient buffer, allocating zeros on first use.
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 tensor with optional gradient tracking.
///
/// Tensors are cheap handles: copying a Tensor shares the underlying buffer.
/// Values are never modified by differentiable operations; only parameter
/// updates (through mutable_values) and gradient accumulation write in place.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  /// Standard-normal samples from SplitMix64(seed) through Box-Muller.
  static Tensor randn(const Shape& shape, std::uint64_t seed);
  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t size(std::int64_t axis) const;
  std::int64_t numel() const;

  std::span<const double> values() const;
  /// In-place access for optimizers and loaders. Never recorded on a tape.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::int64_t flat_index) const { return values()[static_cast<std::size_t>(flat_index)]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy of the values with no gradient state.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_tensor(Shape, std::vector<double>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Builds a result tensor; validates the size and that every value is finite.
Tensor make_tensor(Shape shape, std::vector<double> values);

/// Ordered record of differentiable operations.
///
/// Operations record themselves on the tape that is active on the current
/// thread (see Scope) whenever at least one input requires a gradient.
/// backward() replays the record in exact reverse order. A tape can be
/// replayed once; call reset() before reusing it.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() noexcept;

  /// True when an operation with these inputs must be recorded.
  static bool should_record(std::initializer_list<const Tensor*> inputs);
  static bool should_record(std::span<const Tensor> inputs);

  /// Marks `output` as requiring grad and appends a node. `fn` receives the
  /// output gradient and accumulates into its captured inputs.
  void record(const Tensor& output, BackwardFn fn);

  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Records `fn` on the active tape when any of `inputs` requires grad.
void record_op(const Tensor& output, std::initializer_list<const Tensor*> inputs,
               Tape::BackwardFn fn);

}  // namespace stripereid
