#include "norml/diffgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace norml::ad {

namespace {

constexpr NodeId kNone = std::numeric_limits<NodeId>::max();

double evaluate(Op op, double a, double b, double c) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Mul: return a * b;
    case Op::Neg: return -a;
    case Op::Div: return a / b;
    case Op::Exp: return std::exp(a);
    case Op::Log: return std::log(a);
    case Op::Tanh: return std::tanh(a);
    case Op::Relu: return a > 0.0 ? a : 0.0;
    case Op::Square: return a * a;
    case Op::Max: return a >= b ? a : b;
    case Op::Select: return a > 0.0 ? b : c;
    case Op::Input:
    case Op::Const: break;
  }
  throw ConstructionError("evaluate: not a computed primitive");
}

bool is_known(Op op) {
  return static_cast<std::uint8_t>(op) <= static_cast<std::uint8_t>(Op::Select);
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Neg: return "neg";
    case Op::Div: return "div";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Square: return "square";
    case Op::Max: return "max";
    case Op::Select: return "select";
  }
  return "unknown";
}

int op_arity(Op op) {
  switch (op) {
    case Op::Input:
    case Op::Const: return 0;
    case Op::Neg:
    case Op::Exp:
    case Op::Log:
    case Op::Tanh:
    case Op::Relu:
    case Op::Square: return 1;
    case Op::Add:
    case Op::Mul:
    case Op::Div:
    case Op::Max: return 2;
    case Op::Select: return 3;
  }
  return -1;
}

NumericDomainError::NumericDomainError(NodeId node, Op op, double value)
    : std::domain_error([&] {
        std::ostringstream os;
        os << "non-finite value " << value << " at node " << node << " ("
           << op_name(op) << ")";
        return os.str();
      }()),
      node_(node),
      op_(op) {}

double Var::value() const {
  if (tape_ == nullptr) throw ConstructionError("value of an unbound Var");
  return tape_->value(id_);
}

NodeId Tape::push(Op op, std::array<NodeId, 3> args, double value) {
  if (finalized_) throw ConstructionError("tape is finalized");
  const auto id = static_cast<NodeId>(nodes_.size());
  if (!std::isfinite(value)) throw NumericDomainError(id, op, value);
  nodes_.push_back(Node{op, args, value});
  return id;
}

Var Tape::input(double value) {
  const NodeId id = push(Op::Input, {}, value);
  inputs_.push_back(id);
  return Var(this, id);
}

Var Tape::constant(double value) { return Var(this, push(Op::Const, {}, value)); }

Var Tape::var(NodeId id) {
  if (id >= nodes_.size()) throw ConstructionError("node id out of range");
  return Var(this, id);
}

Var Tape::apply(Op op, std::span<const Var> operands) {
  if (!is_known(op) || op == Op::Input || op == Op::Const) {
    throw ConstructionError("unsupported primitive code " +
                            std::to_string(static_cast<int>(op)));
  }
  if (static_cast<int>(operands.size()) != op_arity(op)) {
    throw ConstructionError(std::string(op_name(op)) + ": expected " +
                            std::to_string(op_arity(op)) + " operands");
  }
  std::array<NodeId, 3> args{};
  std::array<double, 3> vals{};
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (operands[i].tape() != this) {
      throw ConstructionError(std::string(op_name(op)) +
                              ": operand belongs to another tape");
    }
    args[i] = operands[i].id();
    vals[i] = nodes_[args[i]].value;
  }
  const double value = evaluate(op, vals[0], vals[1], vals[2]);
  return Var(this, push(op, args, value));
}

void Tape::finalize(std::span<const Var> outputs) {
  if (finalized_) throw ConstructionError("tape already finalized");
  outputs_.clear();
  for (const Var& v : outputs) {
    if (v.tape() != this) throw ConstructionError("output belongs to another tape");
    outputs_.push_back(v.id());
  }
  finalized_ = true;
}

Tape Tape::fork() const {
  Tape out = *this;
  out.outputs_.clear();
  out.finalized_ = false;
  return out;
}

Tape Tape::replay(std::span<const double> input_values) const {
  if (input_values.size() != inputs_.size()) {
    throw ContractError("replay: expected " + std::to_string(inputs_.size()) +
                        " input values");
  }
  Tape out;
  out.nodes_.reserve(nodes_.size());
  std::size_t next_input = 0;
  for (const Node& n : nodes_) {
    const auto id = static_cast<NodeId>(out.nodes_.size());
    double value = n.value;
    if (n.op == Op::Input) {
      value = input_values[next_input++];
      out.inputs_.push_back(id);
    } else if (n.op != Op::Const) {
      value = evaluate(n.op, out.nodes_[n.args[0]].value,
                       out.nodes_[n.args[1]].value, out.nodes_[n.args[2]].value);
    }
    out.push(n.op, n.args, value);
  }
  out.outputs_ = outputs_;
  out.finalized_ = finalized_;
  return out;
}

namespace {

Tape* common_tape(std::initializer_list<Var> vs) {
  Tape* t = nullptr;
  for (const Var& v : vs) {
    if (v.tape() == nullptr) throw ConstructionError("operand is an unbound Var");
    if (t == nullptr) t = v.tape();
    if (v.tape() != t) throw ConstructionError("operands belong to different tapes");
  }
  return t;
}

Var apply1(Op op, Var a) {
  const std::array<Var, 1> ops{a};
  return common_tape({a})->apply(op, ops);
}

Var apply2(Op op, Var a, Var b) {
  const std::array<Var, 2> ops{a, b};
  return common_tape({a, b})->apply(op, ops);
}

}  // namespace

Var add(Var a, Var b) { return apply2(Op::Add, a, b); }
Var mul(Var a, Var b) { return apply2(Op::Mul, a, b); }
Var neg(Var a) { return apply1(Op::Neg, a); }
Var div(Var a, Var b) { return apply2(Op::Div, a, b); }
Var exp(Var a) { return apply1(Op::Exp, a); }
Var log(Var a) { return apply1(Op::Log, a); }
Var tanh(Var a) { return apply1(Op::Tanh, a); }
Var relu(Var a) { return apply1(Op::Relu, a); }
Var square(Var a) { return apply1(Op::Square, a); }
Var max(Var a, Var b) { return apply2(Op::Max, a, b); }

Var select(Var cond, Var if_positive, Var otherwise) {
  const std::array<Var, 3> ops{cond, if_positive, otherwise};
  return common_tape({cond, if_positive, otherwise})->apply(Op::Select, ops);
}

Var sub(Var a, Var b) { return add(a, neg(b)); }
Var min(Var a, Var b) { return neg(max(neg(a), neg(b))); }

Var sum(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("sum of an empty list");
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

Var dot(std::span<const Var> xs, std::span<const Var> ys) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw ContractError("dot: operands must be non-empty and of equal length");
  }
  Var acc = mul(xs[0], ys[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, mul(xs[i], ys[i]));
  return acc;
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }
Var operator-(Var a) { return neg(a); }
Var operator+(Var a, double b) { return add(a, common_tape({a})->constant(b)); }
Var operator+(double a, Var b) { return add(common_tape({b})->constant(a), b); }
Var operator-(Var a, double b) { return add(a, common_tape({a})->constant(-b)); }
Var operator-(double a, Var b) { return add(common_tape({b})->constant(a), neg(b)); }
Var operator*(Var a, double b) { return mul(a, common_tape({a})->constant(b)); }
Var operator*(double a, Var b) { return mul(common_tape({b})->constant(a), b); }
Var operator/(Var a, double b) { return div(a, common_tape({a})->constant(b)); }
Var operator/(double a, Var b) { return div(common_tape({b})->constant(a), b); }

Recording record(const Program& program, std::span<const double> inputs) {
  Recording rec;
  std::vector<Var> in;
  in.reserve(inputs.size());
  for (double x : inputs) in.push_back(rec.tape.input(x));
  std::vector<Var> out = program(rec.tape, in);
  rec.tape.finalize(out);
  for (const Var& v : out) rec.outputs.push_back(v.value());
  return rec;
}

double GradientResult::operator[](NodeId root) const {
  const auto it = std::find(roots.begin(), roots.end(), root);
  if (it == roots.end()) throw ContractError("node is not a requested root");
  return values[static_cast<std::size_t>(it - roots.begin())];
}

namespace {

NodeId scalar_output(const Tape& tape) {
  if (!tape.finalized()) throw ContractError("tape is not finalized");
  if (tape.outputs().size() != 1) {
    throw ContractError("gradient requires a scalar output, tape has " +
                        std::to_string(tape.outputs().size()) + " outputs");
  }
  return tape.outputs()[0];
}

void check_roots(const Tape& tape, std::span<const NodeId> wrt) {
  for (NodeId r : wrt) {
    if (r >= tape.size()) throw ContractError("root id out of range");
  }
}

}  // namespace

GradientResult gradient(const Tape& tape, std::span<const NodeId> wrt) {
  const NodeId out = scalar_output(tape);
  check_roots(tape, wrt);
  const auto nodes = tape.nodes();
  std::vector<double> adj(out + 1, 0.0);
  adj[out] = 1.0;
  for (NodeId i = out + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes[i];
    const NodeId a = n.args[0], b = n.args[1], c = n.args[2];
    switch (n.op) {
      case Op::Input:
      case Op::Const: break;
      case Op::Add: adj[a] += g; adj[b] += g; break;
      case Op::Mul:
        adj[a] += g * nodes[b].value;
        adj[b] += g * nodes[a].value;
        break;
      case Op::Neg: adj[a] -= g; break;
      case Op::Div:
        adj[a] += g / nodes[b].value;
        adj[b] -= g * n.value / nodes[b].value;
        break;
      case Op::Exp: adj[a] += g * n.value; break;
      case Op::Log: adj[a] += g / nodes[a].value; break;
      case Op::Tanh: adj[a] += g * (1.0 - n.value * n.value); break;
      case Op::Relu: if (nodes[a].value > 0.0) adj[a] += g; break;
      case Op::Square: adj[a] += g * 2.0 * nodes[a].value; break;
      case Op::Max:
        if (nodes[a].value >= nodes[b].value) adj[a] += g; else adj[b] += g;
        break;
      case Op::Select:
        if (nodes[a].value > 0.0) adj[b] += g; else adj[c] += g;
        break;
    }
  }
  GradientResult res;
  res.roots.assign(wrt.begin(), wrt.end());
  res.values.reserve(wrt.size());
  for (NodeId r : wrt) res.values.push_back(r <= out ? adj[r] : 0.0);
  return res;
}

GradientResult gradient(const Tape& tape) { return gradient(tape, tape.inputs()); }

Differentiated differentiate(const Tape& tape, std::span<const NodeId> wrt) {
  const NodeId out = scalar_output(tape);
  check_roots(tape, wrt);

  Differentiated d;
  d.output = out;
  // Forward nodes keep their ids; adjoint nodes are appended after them.
  d.tape = tape.fork();
  Tape& t = d.tape;

  std::vector<NodeId> adj(out + 1, kNone);
  auto accumulate = [&](NodeId target, Var contrib) {
    adj[target] = adj[target] == kNone ? contrib.id() : add(t.var(adj[target]), contrib).id();
  };
  adj[out] = t.constant(1.0).id();

  for (NodeId i = out + 1; i-- > 0;) {
    if (adj[i] == kNone) continue;
    const Node n = t.node(i);
    const Var g = t.var(adj[i]);
    const Var self = t.var(i);
    switch (n.op) {
      case Op::Input:
      case Op::Const: break;
      case Op::Add:
        accumulate(n.args[0], g);
        accumulate(n.args[1], g);
        break;
      case Op::Mul:
        accumulate(n.args[0], g * t.var(n.args[1]));
        accumulate(n.args[1], g * t.var(n.args[0]));
        break;
      case Op::Neg: accumulate(n.args[0], -g); break;
      case Op::Div: {
        const Var b = t.var(n.args[1]);
        accumulate(n.args[0], g / b);
        accumulate(n.args[1], -(g * self) / b);
        break;
      }
      case Op::Exp: accumulate(n.args[0], g * self); break;
      case Op::Log: accumulate(n.args[0], g / t.var(n.args[0])); break;
      case Op::Tanh: accumulate(n.args[0], g * (1.0 - square(self))); break;
      case Op::Relu:
        accumulate(n.args[0], select(t.var(n.args[0]), g, t.constant(0.0)));
        break;
      case Op::Square: accumulate(n.args[0], g * (2.0 * t.var(n.args[0]))); break;
      case Op::Max: {
        // Ties go to the first operand, matching the numeric pass.
        const Var b_minus_a = t.var(n.args[1]) - t.var(n.args[0]);
        accumulate(n.args[0], select(b_minus_a, t.constant(0.0), g));
        accumulate(n.args[1], select(b_minus_a, g, t.constant(0.0)));
        break;
      }
      case Op::Select: {
        const Var cond = t.var(n.args[0]);
        accumulate(n.args[1], select(cond, g, t.constant(0.0)));
        accumulate(n.args[2], select(cond, t.constant(0.0), g));
        break;
      }
    }
  }

  d.gradients.reserve(wrt.size());
  for (NodeId r : wrt) {
    d.gradients.push_back(r <= out && adj[r] != kNone ? adj[r] : t.constant(0.0).id());
  }
  return d;
}

std::vector<double> grad_of_grad(const Tape& tape, std::span<const NodeId> wrt_outer,
                                 std::span<const NodeId> wrt_inner,
                                 std::span<const double> direction) {
  if (direction.size() != wrt_inner.size()) {
    throw ContractError("grad_of_grad: direction has " + std::to_string(direction.size()) +
                        " entries, expected " + std::to_string(wrt_inner.size()));
  }
  if (wrt_inner.empty()) throw ContractError("grad_of_grad: empty inner root set");
  Differentiated d = differentiate(tape, wrt_inner);
  Tape& t = d.tape;
  Var acc = t.var(d.gradients[0]) * direction[0];
  for (std::size_t i = 1; i < wrt_inner.size(); ++i) {
    acc = acc + t.var(d.gradients[i]) * direction[i];
  }
  t.finalize({acc});
  return gradient(t, wrt_outer).values;
}

double fd_check(const Program& program, std::span<const double> x, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("fd_check: epsilon must be positive");
  const Recording rec = record(program, x);
  const GradientResult g = gradient(rec.tape);
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + epsilon;
    const double fp = record(program, probe).outputs.at(0);
    probe[i] = x[i] - epsilon;
    const double fm = record(program, probe).outputs.at(0);
    probe[i] = x[i];
    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double analytic = g.values[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  return worst;
}

}  // namespace norml::ad
