#include "sickfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "sickfuse/errors.hpp"

namespace sickfuse {

Parameter::Parameter(std::string name, Tensor value, bool trainable)
    : name_(std::move(name)),
      value_(std::move(value)),
      grad_(value_.shape(), 0.0),
      trainable_(trainable) {}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::watch(Parameter& param) {
  nodes_.push_back(Node{param.value(), {}, {}, &param, param.trainable()});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw ContractError("operation mixes variables from different tapes");
    needs = needs || nodes_[in.id].requires_grad;
  }
  Node node{std::move(value), {}, {}, nullptr, needs && static_cast<bool>(backward)};
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::add_regularizer(Var kernel, double l2) {
  if (l2 != 0.0) regularizers_.emplace_back(kernel, l2);
}

double Tape::regularization_value() const {
  double total = 0.0;
  for (const auto& [kernel, l2] : regularizers_) {
    double s = 0.0;
    for (double w : value(kernel.id).data()) s += w * w;
    total += l2 * s;
  }
  return total;
}

Var Tape::regularization() {
  std::vector<Var> inputs;
  for (const auto& r : regularizers_) inputs.push_back(r.first);
  auto regs = regularizers_;
  return record(Tensor::scalar(regularization_value()), inputs,
                [regs](Tape& tape, const Tensor& g) {
                  const double go = g[0];
                  for (const auto& [kernel, l2] : regs) {
                    if (!tape.requires_grad(kernel)) continue;
                    const Tensor& w = tape.value(kernel.id);
                    Tensor& gw = tape.grad_buffer(kernel.id);
                    for (std::size_t i = 0; i < w.size(); ++i) gw[i] += 2.0 * l2 * w[i] * go;
                  }
                });
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss belongs to another tape");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(nodes_[loss.id].value.shape()));
  }
  grad_buffer(loss.id).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      // The closure may grow other nodes' buffers; copy our gradient first.
      const Tensor g = n.grad;
      n.backward(*this, g);
    }
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double step) {
  Tensor grad(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.shape() != numeric.shape()) throw ShapeError("gradient shapes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace sickfuse
