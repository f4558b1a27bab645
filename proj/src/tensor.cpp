#include "wsss/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "wsss/error.hpp"

namespace wsss {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values,
                                       bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
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

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const& {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  }
  return node_->values[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw ShapeError("at(i, j) needs a matrix");
  return node_->values[i * node_->shape[1] + j];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of undefined tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (!node_) throw ContractError("use of undefined tensor");
  if (node_->grad.empty()) return std::vector<double>(node_->values.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  return Tensor::from(shape(), std::vector<double>(values().begin(), values().end()));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, detail::BackwardFn fn) {
  bool track = false;
  if (t_grad_enabled) {
    for (const Tensor& t : inputs) track = track || t.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(values), track);
  if (track) {
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tape Tape::record(const Tensor& output) {
  Tape tape;
  if (!output.defined()) throw ContractError("tape of undefined tensor");
  std::vector<detail::Node*> stack{output.node().get()};
  std::unordered_set<const detail::Node*> seen{output.node().get()};
  std::vector<std::shared_ptr<detail::Node>> found{output.node()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (!p->requires_grad || !seen.insert(p.get()).second) continue;
      found.push_back(p);
      stack.push_back(p.get());
    }
  }
  for (auto& n : found) {
    if (n->is_leaf()) {
      if (n->requires_grad) tape.leaves_.push_back(std::move(n));
    } else {
      tape.entries_.push_back(std::move(n));
    }
  }
  std::sort(tape.entries_.begin(), tape.entries_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

std::vector<std::uint64_t> Tape::sequence() const {
  std::vector<std::uint64_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e->seq);
  return out;
}

void Tape::backward(const Tensor& output) const {
  auto& root = *output.node();
  // Intermediate gradients are transient; leaf gradients accumulate.
  for (const auto& e : entries_) e->grad.clear();
  root.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.grad.empty()) continue;
    n.backward(n);
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " +
                        shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward on a tensor that does not require grad");
  }
  Tape::record(loss).backward(loss);
}

}  // namespace wsss
