#pragma once

#include <map>
#include <string>
#include <vector>

#include "softflow/tensor.hpp"

namespace softflow {

// Gradients keyed by parameter identifier. Every named leaf on the tape gets
// exactly one entry with the parameter's shape (zeros if the loss does not
// depend on it).
using GradientMap = std::map<std::string, Tensor>;

using ValueId = int;

// Reverse-mode tape over a closed primitive set: matmul (with transpose
// flags), add (same shape, row broadcast, scalar broadcast), sub,
// tanh / relu, row-wise log-softmax, per-row column gather, reduce-sum,
// elementwise square, and scalar constants (multiply / add).
//
// Nodes are recorded in topological order by construction: an operation can
// only reference ids the tape has already handed out. backward() is
// non-destructive; a tape can be differentiated any number of times.
class Tape {
 public:
  // Leaves. A non-empty name marks a trainable parameter; constants are
  // anonymous.
  ValueId leaf(Tensor value, std::string param_name = "");

  ValueId matmul(ValueId a, ValueId b, bool trans_a = false, bool trans_b = false);
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId tanh(ValueId a);
  ValueId relu(ValueId a);
  ValueId log_softmax_rows(ValueId a);
  // y[i,0] = x[i, col[i]]
  ValueId gather_cols(ValueId a, std::vector<int> col);
  ValueId reduce_sum(ValueId a);
  ValueId square(ValueId a);
  ValueId mul_const(ValueId a, double c);
  ValueId add_const(ValueId a, double c);

  const Tensor& value(ValueId id) const;
  size_t size() const { return nodes_.size(); }

  // d(sum(output * seed)) / d(param) for every named leaf on the tape.
  // seed shape must match the output shape.
  GradientMap backward(ValueId output, const Tensor& seed) const;

 private:
  enum class Op {
    leaf,
    matmul,
    add,
    sub,
    tanh,
    relu,
    log_softmax,
    gather,
    reduce_sum,
    square,
    mul_const,
    add_const,
  };

  struct Node {
    Op op;
    ValueId a = -1;
    ValueId b = -1;
    Tensor value;
    double scalar = 0.0;       // mul_const / add_const
    bool trans_a = false;      // matmul
    bool trans_b = false;
    std::vector<int> columns;  // gather
    std::string param;         // leaf
  };

  ValueId push(Node node);
  const Node& node(ValueId id) const;
  void require_matrix(ValueId id, const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace softflow
