#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dgp/tensor.hpp"

namespace dgp {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using Bindings = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

/// Accumulates the node's output adjoint into its inputs' adjoints. Entries of
/// `input_adjoints` are null for inputs that do not need a gradient.
using BackwardFn =
    std::function<void(const Tensor& output, const Tensor& adjoint,
                       std::span<Tensor* const> input_adjoints)>;

/// Define-by-run record of a computation.
///
/// Every primitive appends one node holding its value and a backward closure.
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is reported by backward() under `name`.
  Var variable(std::string name, Tensor value);
  /// Leaf without a gradient.
  Var constant(Tensor value);

  /// Appends an op node. Throws NumericalError if `value` is not finite.
  Var record(std::string_view op, std::vector<Var> inputs, Tensor value,
             BackwardFn backward);

  const Tensor& value(const Var& v) const { return nodes_[v.id_].value; }
  std::string_view op(const Var& v) const { return nodes_[v.id_].op; }
  bool requires_grad(const Var& v) const {
    return nodes_[v.id_].requires_grad;
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar root. Returns d(root)/d(variable) for every
  /// variable on the tape, keyed by name. Adjoints are reset on each call.
  Gradients backward(const Var& root);

  /// Adjoint of `v` from the most recent backward() call.
  const Tensor& adjoint(const Var& v) const;

  /// Fetches a named variable's handle.
  Var variable_handle(const std::string& name) const;

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;  // deque keeps value references stable
  std::vector<Tensor> adjoints_;
  std::map<std::string, std::size_t> variables_;
};

/// Builds the computation on a tape given the bound leaves.
using TapeFunction =
    std::function<Var(Tape& tape, const std::map<std::string, Var>& leaves)>;

/// Binds every entry of `bindings` as a variable, runs `fn`, returns the root.
Tensor forward(const TapeFunction& fn, const Bindings& bindings);

struct ValueAndGradients {
  Tensor value;
  Gradients gradients;
};

/// forward() followed by backward() from the (scalar) root.
ValueAndGradients value_and_gradients(const TapeFunction& fn,
                                      const Bindings& bindings);

}  // namespace dgp
