#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gslab/tensor.hpp"

namespace gslab::ad {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  int id = -1;
  Tape* tape = nullptr;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kNeg,
  kMul,
  kDiv,
  kExp,
  kLog,
  kSqrt,
  kAbs,
  kRelu,
  kStep,
  kSign,
  kMatmul,
  kTranspose,
  kSum,
  kScale,
  kBroadcastScalar,
  kRowBroadcast,
  kReduceRows,
  kColBroadcast,
  kReduceCols,
  kReshape,
};

const char* op_name(Op op);

// Append-only record of primitive operations. Nodes are topologically ordered
// by construction. backward() emits its adjoint computations as further nodes
// on the same tape, so a backward pass can itself be differentiated
// (backward-over-backward gives exact second-order derivatives).
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  // Gradients of a scalar output with respect to `wrt`, as new vars on this
  // tape. Leaves with no path to the output get zero gradients. Throws
  // ContractError if the output is not a 1-element tensor.
  std::vector<Var> backward(Var scalar_out, std::span<const Var> wrt);

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Tensor value;
    double factor = 0.0;  // kScale
    bool needs_grad = false;
  };

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  friend Var record_node(Tape& t, Node n);
  Var push(Node n);

  std::vector<Node> nodes_;
};

// Primitive builders. Both operands of a binary op must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var relu(Var a);
Var step(Var a);
Var sign(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var sum(Var a);  // all elements -> [1]
Var scale(Var a, double c);
Var row_broadcast(Var v, int rows);
Var reduce_rows(Var a);
Var col_broadcast(Var v, int cols);
Var reduce_cols(Var a);
Var reshape(Var a, std::vector<int> shape);

// -log softmax(logits)[label], summed over the batch. `logits` is [C] or
// [B,C]; `labels` holds one class id per batch row. Built from smooth
// primitives (max-shifted log-sum-exp), so it supports repeated
// differentiation.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

// Gradient of a scalar that was itself computed from backward() outputs.
// Exact second-order derivative; throws ContractError if `scalar` is not a
// 1-element tensor.
Tensor grad_of_grad(Tape& tape, Var scalar_of_gradients, Var wrt_leaf);

// Central finite differences of an arbitrary scalar function. Debugging
// fallback for the analytic second-order path; slow and approximate.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h = 1e-5);

}  // namespace gslab::ad
