#ifndef MERGENET_TENSOR_HPP
#define MERGENET_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mergenet {

#ifdef MERGENET_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage shared by all handles to one tensor.
struct TensorNode {
  Shape shape;
  std::vector<Scalar> data;
  std::vector<Scalar> grad;  // empty means "no gradient yet"
  bool requires_grad = false;

  void ensure_grad();
};

/*
 * Dense row-major tensor handle.
 *
 * Copying a Tensor copies the handle: both copies observe the same storage,
 * which is what lets a recorded operation find its inputs again during the
 * backward pass. Use clone() or detach() for an independent value.
 */
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);
  static Tensor eye(std::size_t n);
  /// Builds a 2-D tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<Scalar>> rows);
  static Tensor from_rows(const std::vector<std::vector<Scalar>>& rows);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const { return node_->data.size(); }
  bool is_matrix() const { return rank() == 2; }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Scalar> data() const { return node_->data; }
  std::span<Scalar> data() { return node_->data; }
  Scalar operator[](std::size_t i) const { return node_->data[i]; }
  Scalar& operator[](std::size_t i) { return node_->data[i]; }
  Scalar at(std::size_t i, std::size_t j) const;
  Scalar& at(std::size_t i, std::size_t j);
  /// Value of a single-element tensor.
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Scalar> grad() const { return node_->grad; }
  std::span<Scalar> grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy that keeps requires_grad; the copy is a fresh leaf.
  Tensor clone() const;
  /// Deep copy with requires_grad off.
  Tensor detach() const;
  /// Overwrites values in place (not recorded); shapes must match.
  void assign(const Tensor& other);

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  std::vector<std::vector<Scalar>> to_rows() const;

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<Scalar>);

  std::shared_ptr<TensorNode> node_;
};

/// Backward closure: receives the output node (with its grad filled in) and
/// accumulates into the grads of the inputs it captured.
using BackwardFn = std::function<void(const TensorNode& out)>;

/*
 * Ordered record of differentiable operations executed while the tape is
 * active on the current thread. backward() replays the records in strict
 * reverse order, each exactly once.
 */
class GradTape {
 public:
  struct Record {
    std::string op;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    BackwardFn backward;
  };

  void record(Record rec) { records_.push_back(std::move(rec)); }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
  void backward(const Tensor& loss);

  /// Indices of the records whose closures ran in the last backward(),
  /// in the order they ran.
  const std::vector<std::size_t>& last_backward_order() const { return visited_; }

 private:
  std::vector<Record> records_;
  std::vector<std::size_t> visited_;
};

/// Makes a tape the active one for this thread for the guard's lifetime.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

/// Disables recording for the guard's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape* previous_;
};

GradTape* active_tape();

/// Runs backward on the thread's active tape.
void backward(const Tensor& loss);

/*
 * Creates the result of an operation and, when a tape is active and any
 * input requires a gradient, records it with the given backward closure.
 * All built-in ops go through here; tests use it to build fixtures.
 */
Tensor apply_op(const std::string& op, Shape shape, std::vector<Scalar> data,
                const std::vector<Tensor>& inputs, BackwardFn backward);

}  // namespace mergenet

#endif  // MERGENET_TENSOR_HPP
