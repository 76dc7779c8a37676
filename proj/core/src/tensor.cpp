#include "mergenet/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "mergenet/errors.hpp"

namespace mergenet {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), Scalar(0));
}

Tensor::Tensor() : node_(std::make_shared<TensorNode>()) {
  node_->shape = {1};
  node_->data = {Scalar(0)};
}

Tensor::Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape.empty()) throw ShapeError("tensor must have at least one dimension");
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<Scalar>(n, Scalar(0)), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<Scalar>(n, value), requires_grad);
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::eye(std::size_t n) {
  auto t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = Scalar(1);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
  std::vector<std::vector<Scalar>> v;
  for (const auto& r : rows) v.emplace_back(r);
  return from_rows(v);
}

Tensor Tensor::from_rows(const std::vector<std::vector<Scalar>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ShapeError("from_rows needs a non-empty matrix");
  const auto cols = rows.front().size();
  std::vector<Scalar> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) throw ShapeError("dim " + std::to_string(i) + " out of range for " + shape_str(shape()));
  return node_->shape[i];
}

std::size_t Tensor::rows() const {
  if (!is_matrix()) throw ShapeError("expected a 2-D tensor, got " + shape_str(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (!is_matrix()) throw ShapeError("expected a 2-D tensor, got " + shape_str(shape()));
  return node_->shape[1];
}

Scalar Tensor::at(std::size_t i, std::size_t j) const { return node_->data[i * cols() + j]; }
Scalar& Tensor::at(std::size_t i, std::size_t j) { return node_->data[i * cols() + j]; }

Scalar Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->data = node_->data;
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::detach() const {
  auto t = clone();
  t.set_requires_grad(false);
  return t;
}

void Tensor::assign(const Tensor& other) {
  if (other.shape() != shape()) {
    throw ShapeError("assign: " + shape_str(other.shape()) + " into " + shape_str(shape()));
  }
  node_->data = other.node_->data;
}

std::vector<std::vector<Scalar>> Tensor::to_rows() const {
  std::vector<std::vector<Scalar>> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) {
    out[i].assign(node_->data.begin() + static_cast<std::ptrdiff_t>(i * cols()),
                  node_->data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols()));
  }
  return out;
}

Tensor make_result(Shape shape, std::vector<Scalar> data) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return Tensor(std::move(n));
}

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  const auto& loss_node = loss.node();
  bool on_tape = loss_node->requires_grad &&
                 std::any_of(records_.begin(), records_.end(),
                             [&](const Record& r) { return r.output == loss_node; });
  bool is_leaf = loss_node->requires_grad &&
                 std::none_of(records_.begin(), records_.end(),
                              [&](const Record& r) { return r.output == loss_node; });
  if (!on_tape && !is_leaf) throw ContractError("backward: loss is not on the tape");

  // Intermediate grads from a previous pass on this tape would be stale.
  for (const auto& r : records_) r.output->grad.clear();

  loss_node->ensure_grad();
  loss_node->grad[0] += Scalar(1);

  visited_.clear();
  for (std::size_t i = records_.size(); i-- > 0;) {
    const auto& rec = records_[i];
    if (rec.output->grad.empty()) continue;
    rec.backward(*rec.output);
    visited_.push_back(i);
  }
}

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

GradTape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw ContractError("backward called with no active tape");
  g_active_tape->backward(loss);
}

Tensor apply_op(const std::string& op, Shape shape, std::vector<Scalar> data,
                const std::vector<Tensor>& inputs, BackwardFn backward_fn) {
  auto out = make_result(std::move(shape), std::move(data));
  auto* tape = g_active_tape;
  if (tape == nullptr) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.set_requires_grad(true);
  GradTape::Record rec;
  rec.op = op;
  rec.output = out.node();
  rec.inputs.reserve(inputs.size());
  for (const auto& t : inputs) rec.inputs.push_back(t.node());
  rec.backward = std::move(backward_fn);
  tape->record(std::move(rec));
  return out;
}

}  // namespace mergenet
