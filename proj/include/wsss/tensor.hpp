#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wsss {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> values;
  // Empty until a gradient is first accumulated.
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
  // Zero-initialises the gradient buffer on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major tensor of doubles with an optional gradient slot.
//
// A Tensor is a cheap handle: copies share the same node. Values produced by
// an operation are never written again by the autodiff machinery; only the
// optimizer (through mutable_values) changes leaf parameters between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const&;
  // A span into a temporary would dangle once the full expression ends.
  std::span<const double> values() const&& = delete;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  // All zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  // Copy of the values with no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Thread-local switch; while disabled, operations do not record history.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds the result of a differentiable operation. History is attached only
// when grad mode is on and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, detail::BackwardFn fn);

// Ordered record of the differentiable operations that produced a tensor.
// Entries are kept in execution order; backward replays them in exact
// reverse order.
class Tape {
 public:
  static Tape record(const Tensor& output);

  std::size_t size() const { return entries_.size(); }
  // Execution sequence numbers, ascending.
  std::vector<std::uint64_t> sequence() const;
  void backward(const Tensor& output) const;

 private:
  std::vector<std::shared_ptr<detail::Node>> entries_;
  std::vector<std::shared_ptr<detail::Node>> leaves_;
};

// Accumulates d(loss)/d(x) into every reachable tensor with requires_grad.
// Leaf gradients add up across calls: two backward passes without
// zero_grad in between produce twice the gradient.
void backward(const Tensor& loss);

}  // namespace wsss
