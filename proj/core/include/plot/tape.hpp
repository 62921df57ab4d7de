// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tape.hpp
 * @brief  Matrix-valued reverse-mode differentiation.
 *
 * A Tape records every operation of one forward pass. Calling backward() on
 * a 1x1 node replays the record in reverse and accumulates gradients into the
 * Parameter objects that were registered with parameter(). A tape is used for
 * a single forward/backward and then discarded.
 */
#ifndef PLOT_TAPE_HPP
#define PLOT_TAPE_HPP

#include <cstddef>
#include <functional>
#include <vector>

#include "plot/numerics.hpp"

namespace plot {

class Tape {
public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Matrix value);
  /// Leaf whose gradient is added into @p p.grad by backward().
  Var parameter(Parameter &p);

  const Matrix &value(Var v) const { return nodes_[v.id].value; }
  const Matrix &grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  /// a (B x n) plus a 1 x n bias broadcast over rows.
  Var add_row(Var a, Var bias);
  Var one_minus(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var transpose(Var a);
  Var cols(Var a, Index start, Index count);
  Var concat_cols(Var a, Var b);
  /// S - S^T.
  Var skew(Var s);
  /// (I - A)^{-1} (I + A); orthogonal whenever A is skew-symmetric.
  Var cayley(Var a);
  Var sum(Var a);

  /// Mean cross-entropy of row-wise softmax(logits) against class labels.
  Var softmax_cross_entropy(Var logits, const std::vector<int> &labels);
  /// Mean over all entries of binary cross-entropy with logits.
  Var bce_with_logits(Var logits, const Matrix &targets);

  /// Reverse pass from a 1x1 node; returns its value.
  double backward(Var loss);

private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter *param = nullptr;
    std::function<void(Tape &, std::size_t)> back;
  };

  Var push(Matrix value, bool needs_grad,
           std::function<void(Tape &, std::size_t)> back);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  void accumulate(Var v, const Matrix &g);

  std::vector<Node> nodes_;
};

} // namespace plot

#endif // PLOT_TAPE_HPP
