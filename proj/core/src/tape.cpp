// SPDX-License-Identifier: Apache-2.0
#include "plot/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace plot {

namespace {

void require_same_shape(const Matrix &a, const Matrix &b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("tape ") + op + ": shape mismatch");
}

} // namespace

Tape::Var Tape::push(Matrix value, bool needs_grad,
                     std::function<void(Tape &, std::size_t)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = needs_grad ? std::move(back) : nullptr;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix &g) {
  Node &n = nodes_[v.id];
  if (!n.needs_grad)
    return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Tape::Var Tape::parameter(Parameter &p) {
  Var v = push(p.value, true, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

Tape::Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows())
    throw std::invalid_argument("tape matmul: dimension mismatch");
  Matrix out = value(a) * value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    if (t.needs(a))
      t.accumulate(a, g * t.value(b).transpose());
    if (t.needs(b))
      t.accumulate(b, t.value(a).transpose() * g);
  });
}

Tape::Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Matrix out = value(a) + value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Matrix out = value(a) - value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(a, g);
    if (t.needs(b))
      t.accumulate(b, -g);
  });
}

Tape::Var Tape::hadamard(Var a, Var b) {
  require_same_shape(value(a), value(b), "hadamard");
  Matrix out = value(a).cwiseProduct(value(b));
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    if (t.needs(a))
      t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs(b))
      t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Tape::Var Tape::scale(Var a, double s) {
  Matrix out = value(a) * s;
  return push(std::move(out), needs(a), [a, s](Tape &t, std::size_t self) {
    t.accumulate(a, t.nodes_[self].grad * s);
  });
}

Tape::Var Tape::add_row(Var a, Var bias) {
  if (value(bias).rows() != 1 || value(bias).cols() != value(a).cols())
    throw std::invalid_argument("tape add_row: bias must be 1 x cols");
  Matrix out = value(a).rowwise() + value(bias).row(0);
  return push(std::move(out), needs(a) || needs(bias), [a, bias](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(a, g);
    if (t.needs(bias))
      t.accumulate(bias, g.colwise().sum());
  });
}

Tape::Var Tape::one_minus(Var a) {
  Matrix out = (1.0 - value(a).array()).matrix();
  return push(std::move(out), needs(a), [a](Tape &t, std::size_t self) {
    t.accumulate(a, -t.nodes_[self].grad);
  });
}

Tape::Var Tape::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return push(std::move(out), needs(a), [a](Tape &t, std::size_t self) {
    const Matrix &x = t.value(a);
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(a, (x.array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Tape::Var Tape::sigmoid(Var a) {
  Matrix out = plot::sigmoid(value(a));
  return push(std::move(out), needs(a), [a](Tape &t, std::size_t self) {
    const Matrix &y = t.nodes_[self].value;
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Tape::Var Tape::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  return push(std::move(out), needs(a), [a](Tape &t, std::size_t self) {
    const Matrix &y = t.nodes_[self].value;
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Tape::Var Tape::transpose(Var a) {
  Matrix out = value(a).transpose();
  return push(std::move(out), needs(a), [a](Tape &t, std::size_t self) {
    t.accumulate(a, t.nodes_[self].grad.transpose());
  });
}

Tape::Var Tape::cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > value(a).cols())
    throw std::out_of_range("tape cols: column range out of bounds");
  Matrix out = value(a).middleCols(start, count);
  return push(std::move(out), needs(a), [a, start, count](Tape &t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    g.middleCols(start, count) = t.nodes_[self].grad;
    t.accumulate(a, g);
  });
}

Tape::Var Tape::concat_cols(Var a, Var b) {
  if (value(a).rows() != value(b).rows())
    throw std::invalid_argument("tape concat_cols: row mismatch");
  Matrix out(value(a).rows(), value(a).cols() + value(b).cols());
  out << value(a), value(b);
  const Index ca = value(a).cols();
  const Index cb = value(b).cols();
  return push(std::move(out), needs(a) || needs(b), [a, b, ca, cb](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    if (t.needs(a))
      t.accumulate(a, g.leftCols(ca));
    if (t.needs(b))
      t.accumulate(b, g.rightCols(cb));
  });
}

Tape::Var Tape::skew(Var s) {
  if (value(s).rows() != value(s).cols())
    throw std::invalid_argument("tape skew: matrix must be square");
  Matrix out = value(s) - value(s).transpose();
  return push(std::move(out), needs(s), [s](Tape &t, std::size_t self) {
    const Matrix &g = t.nodes_[self].grad;
    t.accumulate(s, g - g.transpose());
  });
}

Tape::Var Tape::cayley(Var a) {
  const Matrix &av = value(a);
  if (av.rows() != av.cols())
    throw std::invalid_argument("tape cayley: matrix must be square");
  const Index d = av.rows();
  const Matrix eye = Matrix::Identity(d, d);
  Eigen::PartialPivLU<Matrix> lu(eye - av);
  Matrix out = lu.solve(eye + av);
  return push(std::move(out), needs(a), [a, lu](Tape &t, std::size_t self) {
    // R = M^{-1} N with M = I - A, N = I + A gives dR = M^{-1} dA (R + I),
    // so dL/dA = M^{-T} G (R + I)^T.
    const Matrix &r = t.nodes_[self].value;
    const Matrix &g = t.nodes_[self].grad;
    const Index n = r.rows();
    const Matrix left = lu.transpose().solve(g);
    t.accumulate(a, left * (r + Matrix::Identity(n, n)).transpose());
  });
}

Tape::Var Tape::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), needs(a), [a](Tape &t, std::size_t self) {
    const double g = t.nodes_[self].grad(0, 0);
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g));
  });
}

Tape::Var Tape::softmax_cross_entropy(Var logits, const std::vector<int> &labels) {
  const Matrix &z = value(logits);
  if (static_cast<Index>(labels.size()) != z.rows())
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  const Matrix p = softmax_rows(z);
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols())
      throw std::out_of_range("softmax_cross_entropy: label out of range");
    const double shift = z.row(i).maxCoeff();
    const double lse = shift + std::log((z.row(i).array() - shift).exp().sum());
    loss += lse - z(i, y);
  }
  const double n = static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  return push(std::move(out), needs(logits),
              [logits, p, labels, n](Tape &t, std::size_t self) {
                Matrix g = p;
                for (Index i = 0; i < g.rows(); ++i)
                  g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                t.accumulate(logits, g * (t.nodes_[self].grad(0, 0) / n));
              });
}

Tape::Var Tape::bce_with_logits(Var logits, const Matrix &targets) {
  const Matrix &z = value(logits);
  require_same_shape(z, targets, "bce_with_logits");
  // log(1 + e^z) - y z, evaluated stably.
  const Matrix sp = z.unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  const double n = static_cast<double>(z.size());
  Matrix out(1, 1);
  out(0, 0) = (sp - targets.cwiseProduct(z)).sum() / n;
  return push(std::move(out), needs(logits), [logits, targets, n](Tape &t, std::size_t self) {
    const Matrix g = (plot::sigmoid(t.value(logits)) - targets) * (t.nodes_[self].grad(0, 0) / n);
    t.accumulate(logits, g);
  });
}

double Tape::backward(Var loss) {
  if (value(loss).rows() != 1 || value(loss).cols() != 1)
    throw std::invalid_argument("Tape::backward: loss must be 1x1");
  for (Node &n : nodes_)
    n.grad.resize(0, 0);
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node &n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0)
      continue;
    if (n.back)
      n.back(*this, i);
    if (n.param != nullptr)
      n.param->grad += n.grad;
  }
  return value(loss)(0, 0);
}

} // namespace plot
