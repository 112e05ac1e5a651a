#include "gslab/tape.hpp"

#include <algorithm>
#include <cmath>

#include "gslab/errors.hpp"

namespace gslab::ad {

const Tensor& Var::value() const { return tape->value(*this); }

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kNeg: return "neg";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kAbs: return "abs";
    case Op::kRelu: return "relu";
    case Op::kStep: return "step";
    case Op::kSign: return "sign";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kSum: return "sum";
    case Op::kScale: return "scale";
    case Op::kBroadcastScalar: return "broadcast_scalar";
    case Op::kRowBroadcast: return "row_broadcast";
    case Op::kReduceRows: return "reduce_rows";
    case Op::kColBroadcast: return "col_broadcast";
    case Op::kReduceCols: return "reduce_cols";
    case Op::kReshape: return "reshape";
  }
  return "?";
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1, this};
}

Var record_node(Tape& t, Tape::Node n) { return t.push(std::move(n)); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

namespace {

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
}

Var binary(Op op, Var a, Var b) {
  check_same_tape(a, b, op_name(op));
  Tape& t = *a.tape;
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  switch (op) {
    case Op::kAdd: n.value = gslab::add(va, vb); break;
    case Op::kSub: n.value = gslab::sub(va, vb); break;
    case Op::kMul: n.value = gslab::mul(va, vb); break;
    case Op::kDiv: n.value = gslab::div(va, vb); break;
    case Op::kMatmul: n.value = gslab::matmul(va, vb); break;
    default: throw ContractError("binary: bad op");
  }
  n.needs_grad = t.requires_grad(a) || t.requires_grad(b);
  return record_node(t, std::move(n));
}

Var unary(Op op, Var a, double factor = 0.0) {
  Tape& t = *a.tape;
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.factor = factor;
  const Tensor& va = t.value(a);
  switch (op) {
    case Op::kNeg: n.value = gslab::neg(va); break;
    case Op::kExp: n.value = gslab::exp(va); break;
    case Op::kLog: n.value = gslab::log(va); break;
    case Op::kSqrt: n.value = gslab::sqrt(va); break;
    case Op::kAbs: n.value = gslab::abs(va); break;
    case Op::kRelu: n.value = gslab::relu(va); break;
    case Op::kStep: n.value = gslab::step(va); break;
    case Op::kSign: n.value = gslab::sign(va); break;
    case Op::kTranspose: n.value = gslab::transpose(va); break;
    case Op::kSum: n.value = Tensor::scalar(gslab::sum_all(va)); break;
    case Op::kScale: n.value = gslab::scale(va, factor); break;
    default: throw ContractError("unary: bad op");
  }
  // step/sign are piecewise-constant; gradients never flow through them.
  n.needs_grad = (op == Op::kStep || op == Op::kSign) ? false : t.requires_grad(a);
  return record_node(t, std::move(n));
}

Var shaped(Op op, Var a, Tensor value) {
  Tape& t = *a.tape;
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.value = std::move(value);
  n.needs_grad = t.requires_grad(a);
  return record_node(t, std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Op::kMul, a, b); }
Var div(Var a, Var b) { return binary(Op::kDiv, a, b); }
Var matmul(Var a, Var b) { return binary(Op::kMatmul, a, b); }

Var neg(Var a) { return unary(Op::kNeg, a); }
Var exp(Var a) { return unary(Op::kExp, a); }
Var log(Var a) { return unary(Op::kLog, a); }
Var sqrt(Var a) { return unary(Op::kSqrt, a); }
Var abs(Var a) { return unary(Op::kAbs, a); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var step(Var a) { return unary(Op::kStep, a); }
Var sign(Var a) { return unary(Op::kSign, a); }
Var transpose(Var a) { return unary(Op::kTranspose, a); }
Var sum(Var a) { return unary(Op::kSum, a); }
Var scale(Var a, double c) { return unary(Op::kScale, a, c); }

Var row_broadcast(Var v, int rows) {
  return shaped(Op::kRowBroadcast, v, gslab::row_broadcast(v.tape->value(v), rows));
}

Var reduce_rows(Var a) {
  return shaped(Op::kReduceRows, a, gslab::reduce_rows(a.tape->value(a)));
}

Var col_broadcast(Var v, int cols) {
  return shaped(Op::kColBroadcast, v, gslab::col_broadcast(v.tape->value(v), cols));
}

Var reduce_cols(Var a) {
  return shaped(Op::kReduceCols, a, gslab::reduce_cols(a.tape->value(a)));
}

Var reshape(Var a, std::vector<int> shape) {
  return shaped(Op::kReshape, a, gslab::reshape(a.tape->value(a), std::move(shape)));
}

namespace {

Var broadcast_scalar_var(Var s, const std::vector<int>& shape) {
  return shaped(Op::kBroadcastScalar, s, gslab::broadcast_scalar(s.tape->value(s), shape));
}

}  // namespace

std::vector<Var> Tape::backward(Var scalar_out, std::span<const Var> wrt) {
  if (scalar_out.tape != this) throw ContractError("backward: output not on this tape");
  if (value(scalar_out).numel() != 1) {
    throw ContractError("backward: output is not scalar, shape " +
                        shape_str(value(scalar_out).shape()));
  }

  const int top = scalar_out.id;
  // Restrict the sweep to nodes that feed the output and need gradients.
  std::vector<char> active(static_cast<std::size_t>(top) + 1, 0);
  if (nodes_[static_cast<std::size_t>(top)].needs_grad) {
    active[static_cast<std::size_t>(top)] = 1;
    for (int id = top; id >= 0; --id) {
      if (!active[static_cast<std::size_t>(id)]) continue;
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].needs_grad)
        active[static_cast<std::size_t>(n.a)] = 1;
      if (n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].needs_grad)
        active[static_cast<std::size_t>(n.b)] = 1;
    }
  }

  std::vector<Var> adj(static_cast<std::size_t>(top) + 1, Var{});
  adj[static_cast<std::size_t>(top)] = leaf(Tensor::scalar(1.0), false);

  auto accumulate = [&](int id, Var g) {
    if (id < 0 || !nodes_[static_cast<std::size_t>(id)].needs_grad) return;
    Var& slot = adj[static_cast<std::size_t>(id)];
    slot = slot.valid() ? ad::add(slot, g) : g;
  };

  for (int id = top; id >= 0; --id) {
    if (!active[static_cast<std::size_t>(id)]) continue;
    Var g = adj[static_cast<std::size_t>(id)];
    if (!g.valid()) continue;
    // Copy POD fields only; emission below may reallocate nodes_.
    const Node& ref = nodes_[static_cast<std::size_t>(id)];
    const Op op = ref.op;
    const int ia = ref.a;
    const int ib = ref.b;
    const double factor = ref.factor;
    Var va{ia, this};
    Var vb{ib, this};
    Var self{id, this};
    switch (op) {
      case Op::kLeaf:
      case Op::kStep:
      case Op::kSign:
        break;
      case Op::kAdd:
        accumulate(ia, g);
        accumulate(ib, g);
        break;
      case Op::kSub:
        accumulate(ia, g);
        accumulate(ib, ad::neg(g));
        break;
      case Op::kNeg:
        accumulate(ia, ad::neg(g));
        break;
      case Op::kMul:
        accumulate(ia, ad::mul(g, vb));
        accumulate(ib, ad::mul(g, va));
        break;
      case Op::kDiv:
        accumulate(ia, ad::div(g, vb));
        accumulate(ib, ad::neg(ad::div(ad::mul(g, self), vb)));
        break;
      case Op::kExp:
        accumulate(ia, ad::mul(g, self));
        break;
      case Op::kLog:
        accumulate(ia, ad::div(g, va));
        break;
      case Op::kSqrt:
        accumulate(ia, ad::div(ad::scale(g, 0.5), self));
        break;
      case Op::kAbs:
        accumulate(ia, ad::mul(g, ad::sign(va)));
        break;
      case Op::kRelu:
        accumulate(ia, ad::mul(g, ad::step(va)));
        break;
      case Op::kMatmul:
        accumulate(ia, ad::matmul(g, ad::transpose(vb)));
        accumulate(ib, ad::matmul(ad::transpose(va), g));
        break;
      case Op::kTranspose:
        accumulate(ia, ad::transpose(g));
        break;
      case Op::kSum:
        accumulate(ia, broadcast_scalar_var(g, value(va).shape()));
        break;
      case Op::kScale:
        accumulate(ia, ad::scale(g, factor));
        break;
      case Op::kBroadcastScalar:
        accumulate(ia, ad::sum(g));
        break;
      case Op::kRowBroadcast:
        accumulate(ia, ad::reduce_rows(g));
        break;
      case Op::kReduceRows:
        accumulate(ia, ad::row_broadcast(g, value(va).rows()));
        break;
      case Op::kColBroadcast:
        accumulate(ia, ad::reduce_cols(g));
        break;
      case Op::kReduceCols:
        accumulate(ia, ad::col_broadcast(g, value(va).cols()));
        break;
      case Op::kReshape:
        accumulate(ia, ad::reshape(g, value(va).shape()));
        break;
      default:
        throw UnsupportedPrimitiveError(std::string("backward: primitive '") + op_name(op) +
                                        "' has no derivative rule");
    }
  }

  std::vector<Var> grads;
  grads.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.tape != this) throw ContractError("backward: wrt var not on this tape");
    Var g = w.id <= top ? adj[static_cast<std::size_t>(w.id)] : Var{};
    if (!g.valid()) g = leaf(Tensor::zeros(value(w).shape()), false);
    grads.push_back(g);
  }
  return grads;
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = *logits.tape;
  Var z = logits;
  if (t.value(z).rank() == 1) z = reshape(z, {1, static_cast<int>(t.value(z).numel())});
  if (t.value(z).rank() != 2) {
    throw ShapeError("softmax_cross_entropy: logits must be [C] or [B,C], got " +
                     shape_str(t.value(logits).shape()));
  }
  const int batch = t.value(z).rows();
  const int classes = t.value(z).cols();
  if (static_cast<int>(labels.size()) != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(batch));
  }
  Tensor onehot = Tensor::zeros({batch, classes});
  Tensor rowmax = Tensor::zeros({batch});
  for (int i = 0; i < batch; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= classes) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(label) +
                          " out of range [0," + std::to_string(classes) + ")");
    }
    onehot.at(i, label) = 1.0;
    double m = t.value(z).at(i, 0);
    for (int j = 1; j < classes; ++j) m = std::max(m, t.value(z).at(i, j));
    rowmax.at(i) = m;
  }
  // Max-shifted log-sum-exp with the shift detached: the value is exact and
  // every surviving term stays smooth.
  Var m = t.leaf(std::move(rowmax), false);
  Var y = t.leaf(std::move(onehot), false);
  Var shifted = sub(z, col_broadcast(m, classes));
  Var lse = add(log(reduce_cols(exp(shifted))), m);
  Var picked = reduce_cols(mul(z, y));
  return sum(sub(lse, picked));
}

Tensor grad_of_grad(Tape& tape, Var scalar_of_gradients, Var wrt_leaf) {
  const Var wrt[] = {wrt_leaf};
  std::vector<Var> g = tape.backward(scalar_of_gradients, wrt);
  return g[0].value();
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
  Tensor grad = Tensor::zeros(x.shape());
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = x.at(i);
    probe.at(i) = v + h;
    const double fp = f(probe);
    probe.at(i) = v - h;
    const double fm = f(probe);
    probe.at(i) = v;
    grad.at(i) = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace gslab::ad
