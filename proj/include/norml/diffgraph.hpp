#pragma once

// Reverse-mode automatic differentiation on a scalar tape.
//
// A Tape is an append-only list of primitive nodes. Operands always refer to
// earlier nodes, so the node order is a topological order. Differentiating a
// finalized tape can either produce numbers (gradient) or append the adjoint
// computation as ordinary nodes on a fresh copy of the tape (differentiate),
// which can itself be differentiated again for second-order quantities.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "norml/errors.hpp"

namespace norml::ad {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  Input,
  Const,
  Add,
  Mul,
  Neg,
  Div,
  Exp,
  Log,
  Tanh,
  Relu,
  Square,
  Max,
  Select,  // select(c, a, b) = c > 0 ? a : b
};

std::string_view op_name(Op op);
int op_arity(Op op);

struct Node {
  Op op = Op::Const;
  std::array<NodeId, 3> args{};
  double value = 0.0;
};

// Unsupported primitive, wrong arity, or operands from a different tape.
class ConstructionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A primitive produced NaN or Inf.
class NumericDomainError : public std::domain_error {
 public:
  NumericDomainError(NodeId node, Op op, double value);
  NodeId node() const noexcept { return node_; }
  Op op() const noexcept { return op_; }

 private:
  NodeId node_;
  Op op_;
};

class Tape;

// Lightweight handle to a node. Valid only while its tape is alive and not
// moved.
class Var {
 public:
  Var() = default;
  Tape* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }
  double value() const;

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = default;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(const Tape&) = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var input(double value);
  Var constant(double value);
  // Appends a primitive. Throws ConstructionError for Input/Const, unknown
  // op codes, wrong operand count, or foreign operands; NumericDomainError
  // when the result is not finite.
  Var apply(Op op, std::span<const Var> operands);

  Var var(NodeId id);
  void finalize(std::span<const Var> outputs);
  void finalize(std::initializer_list<Var> outputs) {
    finalize(std::span<const Var>(outputs.begin(), outputs.size()));
  }

  bool finalized() const noexcept { return finalized_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  std::span<const NodeId> inputs() const noexcept { return inputs_; }
  std::span<const NodeId> outputs() const noexcept { return outputs_; }
  double value(NodeId id) const { return nodes_.at(id).value; }

  // Re-evaluates every node with new input values (in input order). The
  // returned tape is finalized with the same outputs.
  Tape replay(std::span<const double> input_values) const;

  // Copy of every node that accepts further recording (not finalized).
  Tape fork() const;

 private:
  NodeId push(Op op, std::array<NodeId, 3> args, double value);

  std::vector<Node> nodes_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> outputs_;
  bool finalized_ = false;
};

// Primitives.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var div(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var relu(Var a);
Var square(Var a);
Var max(Var a, Var b);
Var select(Var cond, Var if_positive, Var otherwise);

// Composites built from primitives.
Var sub(Var a, Var b);
Var min(Var a, Var b);
Var sum(std::span<const Var> xs);
Var dot(std::span<const Var> xs, std::span<const Var> ys);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

using Program = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

struct Recording {
  Tape tape;
  std::vector<double> outputs;
};

// Runs `program` on fresh input nodes and finalizes the tape on its outputs.
Recording record(const Program& program, std::span<const double> inputs);

struct GradientResult {
  std::vector<NodeId> roots;
  std::vector<double> values;

  std::size_t size() const noexcept { return roots.size(); }
  double operator[](NodeId root) const;
};

// Exact reverse-mode partials of the single tape output.
GradientResult gradient(const Tape& tape, std::span<const NodeId> wrt);
GradientResult gradient(const Tape& tape);

struct Differentiated {
  Tape tape;  // copy of the forward nodes plus adjoint nodes, not finalized
  NodeId output = 0;
  std::vector<NodeId> gradients;  // one per requested root
};

// Records the reverse pass as nodes so the result can be differentiated
// again.
Differentiated differentiate(const Tape& tape, std::span<const NodeId> wrt);

// d/d(wrt_outer) of <grad_{wrt_inner} f, direction>. With wrt_outer ==
// wrt_inner this is a Hessian-vector product.
std::vector<double> grad_of_grad(const Tape& tape,
                                 std::span<const NodeId> wrt_outer,
                                 std::span<const NodeId> wrt_inner,
                                 std::span<const double> direction);

// Worst elementwise relative error between central differences and the
// reverse-mode gradient of a scalar program. Denominator max(|a|, |b|, 1e-8).
double fd_check(const Program& program, std::span<const double> x,
                double epsilon);

}  // namespace norml::ad
