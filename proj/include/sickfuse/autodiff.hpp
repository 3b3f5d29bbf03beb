#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "sickfuse/tensor.hpp"

namespace sickfuse {

/// A named trainable (or persistent, non-trainable) tensor with its gradient.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool trainable = true);

  const std::string& name() const noexcept { return name_; }
  bool trainable() const noexcept { return trainable_; }

  Tensor& value() noexcept { return value_; }
  const Tensor& value() const noexcept { return value_; }
  Tensor& grad() noexcept { return grad_; }
  const Tensor& grad() const noexcept { return grad_; }

  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool trainable_;
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Record of executed differentiable operations. Nodes are appended in execution
/// order, so inputs always precede their consumers and backward() simply walks
/// the node list in reverse.
class Tape {
 public:
  /// Propagates the node's output gradient into its inputs' gradient buffers.
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is kept on the tape (see grad()).
  Var variable(Tensor value);
  /// Leaf bound to `param`; backward() adds d(loss)/d(param) into param.grad().
  Var watch(Parameter& param);

  /// Appends an operation node. `backward` may be empty for non-differentiable ops.
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  /// Gradient buffer of a node, allocated (zero) on first use.
  Tensor& grad_buffer(std::size_t id);
  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor grad(Var v) const;

  /// Registers `l2 * sum(kernel^2)` with the regularization accumulator.
  void add_regularizer(Var kernel, double l2);
  /// The accumulated regularization term as a differentiable scalar.
  Var regularization();
  /// Direct evaluation of the accumulated regularization term.
  double regularization_value() const;

  /// Reverse pass from a scalar loss. Throws ContractError for non-scalar losses.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable references across push_back
  std::vector<std::pair<Var, double>> regularizers_;
};

/// Central-difference estimate of the gradient of `f` at `x`.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double step = 1e-5);

/// max |a - b| / max(|a|, |b|, floor) over all elements.
double max_relative_error(const Tensor& analytic, const Tensor& numeric,
                          double floor = 1e-6);

}  // namespace sickfuse
