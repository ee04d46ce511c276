#include "dgp/autodiff.hpp"

#include "dgp/errors.hpp"

namespace dgp {

const Tensor& Var::value() const {
  if (!tape_) throw Error("use of an unbound Var");
  return tape_->value(*this);
}

Tape& Var::tape() const {
  if (!tape_) throw Error("use of an unbound Var");
  return *tape_;
}

void Tape::check_owner(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("Var does not belong to this tape");
  }
}

Var Tape::variable(std::string name, Tensor value) {
  if (variables_.count(name)) {
    throw Error("duplicate tape variable '" + name + "'");
  }
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{"variable:" + name, {}, std::move(value), {}, true});
  variables_.emplace(std::move(name), id);
  return Var(this, id);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", {}, std::move(value), {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, std::vector<Var> inputs, Tensor value,
                 BackwardFn backward) {
  const std::size_t id = nodes_.size();
  if (!value.all_finite()) {
    throw NumericalError(std::string(op) + " (node " + std::to_string(id) +
                         "): non-finite output");
  }
  Node node{std::string(op), {}, std::move(value), std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Gradients Tape::backward(const Var& root) {
  check_owner(root);
  if (value(root).size() != 1) {
    throw ShapeError("backward from non-scalar root (node " +
                     std::to_string(root.id_) + ", shape " +
                     value(root).shape_string() + ")");
  }
  adjoints_.assign(nodes_.size(), Tensor{});
  for (std::size_t i = 0; i <= root.id_; ++i) {
    if (nodes_[i].requires_grad) adjoints_[i] = Tensor(nodes_[i].value.shape());
  }
  adjoints_[root.id_].data()[0] = 1.0;

  std::vector<Tensor*> input_adjoints;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward) continue;
    input_adjoints.clear();
    for (auto in : node.inputs) {
      input_adjoints.push_back(nodes_[in].requires_grad ? &adjoints_[in]
                                                        : nullptr);
    }
    node.backward(node.value, adjoints_[i], input_adjoints);
  }

  Gradients grads;
  for (const auto& [name, id] : variables_) {
    grads.emplace(name, id <= root.id_ ? adjoints_[id]
                                       : Tensor(nodes_[id].value.shape()));
  }
  return grads;
}

const Tensor& Tape::adjoint(const Var& v) const {
  check_owner(v);
  if (v.id_ >= adjoints_.size()) {
    throw Error("adjoint requested before backward()");
  }
  return adjoints_[v.id_];
}

Var Tape::variable_handle(const std::string& name) const {
  auto it = variables_.find(name);
  if (it == variables_.end()) throw Error("no tape variable '" + name + "'");
  return Var(const_cast<Tape*>(this), it->second);
}

Tensor forward(const TapeFunction& fn, const Bindings& bindings) {
  Tape tape;
  std::map<std::string, Var> leaves;
  for (const auto& [name, value] : bindings) {
    leaves.emplace(name, tape.variable(name, value));
  }
  return fn(tape, leaves).value();
}

ValueAndGradients value_and_gradients(const TapeFunction& fn,
                                      const Bindings& bindings) {
  Tape tape;
  std::map<std::string, Var> leaves;
  for (const auto& [name, value] : bindings) {
    leaves.emplace(name, tape.variable(name, value));
  }
  Var root = fn(tape, leaves);
  Gradients grads = tape.backward(root);
  return {root.value(), std::move(grads)};
}

}  // namespace dgp
