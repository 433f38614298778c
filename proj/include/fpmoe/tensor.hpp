#pragma once
// Dense float64 tensors with an optional gradient accumulator, plus the
// reverse-mode machinery that ties them into a computation graph.
//
// A Tensor is a handle: copies alias the same storage and graph node. Values
// produced by primitives remember their inputs and a pullback closure; calling
// backward() on a scalar orders the reachable nodes topologically (this order
// is the computation tape) and replays the pullbacks in reverse.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fpmoe {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs that require grad.
  std::function<void(Node&)> pullback;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  // Product of all but the last dimension / size of the last dimension.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Mutating values in place is only meaningful for leaves (parameters).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  // New leaf with copied values and no history.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const { return from(shape(), std::vector<double>(data().begin(), data().end()), requires_grad); }

  const char* op_name() const;
  detail::Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse pass from a scalar. Leaf gradients accumulate across calls;
// intermediate gradients are recomputed from zero each call.
// Throws ContractError for a non-scalar or graph-less loss.
void backward(const Tensor& loss);

// Nodes reachable from `root` in the order backward() replays them reversed.
std::vector<const detail::Node*> tape_order(const Tensor& root);

// Grad recording switch (thread-local). Inside a NoGradGuard primitives build
// no graph, which is what evaluation wants.
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

// Fail-fast on non-finite primitive outputs. Defaults to on in debug builds.
bool check_numerics();
void set_check_numerics(bool on);

}  // namespace fpmoe
