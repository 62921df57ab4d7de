// SPDX-License-Identifier: Apache-2.0
#include "plot/transport.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace plot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_or_neg_inf(double w) { return w > 0.0 ? std::log(w) : kNegInf; }

double log_sum_exp(const double *x, Index n, Index stride) {
  double hi = kNegInf;
  for (Index k = 0; k < n; ++k)
    hi = std::max(hi, x[k * stride]);
  if (hi == kNegInf)
    return kNegInf;
  double acc = 0.0;
  for (Index k = 0; k < n; ++k)
    acc += std::exp(x[k * stride] - hi);
  return hi + std::log(acc);
}

void check_inputs(const DiscreteMeasure &mu, const DiscreteMeasure &nu, double eps) {
  if (!(eps > 0.0))
    throw std::invalid_argument("sinkhorn: eps must be positive");
  if (mu.weights.size() == 0 || nu.weights.size() == 0)
    throw std::invalid_argument("sinkhorn: empty measure");
  mu.validate();
  nu.validate();
  if (mu.support.cols() != nu.support.cols())
    throw std::invalid_argument("sinkhorn: supports have different feature dimension");
}

// One damped Newton ascent step on the balanced dual
//   D(f, g) = <a, f> + <b, g> - eps sum_ij P_ij
// with g_{n-1} held fixed to remove the shift invariance.
void newton_step(const Matrix &cost, const Vector &a, const Vector &b, const Vector &log_a,
                 const Vector &log_b, double eps, Vector &f, Vector &g) {
  const Index m = cost.rows();
  const Index n = cost.cols();
  auto plan = [&](const Vector &ff, const Vector &gg) {
    Matrix p(m, n);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        const double v = log_a(i) + log_b(j) + (ff(i) + gg(j) - cost(i, j)) / eps;
        p(i, j) = v == kNegInf ? 0.0 : std::exp(v);
      }
    return p;
  };
  auto dual = [&](const Vector &ff, const Vector &gg, const Matrix &p) {
    return a.dot(ff) + b.dot(gg) - eps * p.sum();
  };

  const Matrix p = plan(f, g);
  const Vector r = p.rowwise().sum();
  const Vector c = p.colwise().sum().transpose();
  const Index k = m + n - 1;
  Vector grad(k);
  grad.head(m) = a - r;
  grad.tail(n - 1) = (b - c).head(n - 1);

  Matrix h = Matrix::Zero(k, k);
  h.topLeftCorner(m, m).diagonal() = r / eps;
  h.bottomRightCorner(n - 1, n - 1).diagonal() = c.head(n - 1) / eps;
  h.topRightCorner(m, n - 1) = p.leftCols(n - 1) / eps;
  h.bottomLeftCorner(n - 1, m) = p.leftCols(n - 1).transpose() / eps;
  h.diagonal().array() += 1e-12 * h.diagonal().maxCoeff() + 1e-300;
  const Vector step = h.ldlt().solve(grad);
  if (!step.allFinite())
    return;

  const double d0 = dual(f, g, p);
  const double slope = grad.dot(step);
  for (double t = 1.0; t > 1e-12; t *= 0.5) {
    Vector ff = f + t * step.head(m);
    Vector gg = g;
    gg.head(n - 1) += t * step.tail(n - 1);
    const double d1 = dual(ff, gg, plan(ff, gg));
    if (std::isfinite(d1) && d1 >= d0 + 1e-4 * t * slope) {
      f = std::move(ff);
      g = std::move(gg);
      return;
    }
  }
}

// Shared solver. The plan is P_ij = a_i b_j exp((f_i + g_j - C_ij) / eps);
// beta = inf gives balanced Sinkhorn, finite beta the KL-relaxed column
// update with exponent beta / (beta + eps). Small eps is reached through a
// halving schedule that starts at the cost scale and warm-starts the
// potentials; only the final stage at the requested eps decides convergence.
// In the balanced case each final-stage sweep is followed by a Newton step
// on the dual, which gets through nearly degenerate instances where plain
// sweeps stall.
Coupling solve(const DiscreteMeasure &mu, const DiscreteMeasure &nu, double eps, double beta,
               SinkhornOptions options) {
  const Matrix cost = squared_euclidean_cost(mu.support, nu.support);
  const Index m = cost.rows();
  const Index n = cost.cols();
  const bool balanced = std::isinf(beta);

  Vector log_a(m), log_b(n);
  for (Index i = 0; i < m; ++i)
    log_a(i) = log_or_neg_inf(mu.weights(i));
  for (Index j = 0; j < n; ++j)
    log_b(j) = log_or_neg_inf(nu.weights(j));

  Vector f = Vector::Zero(m);
  Vector g = Vector::Zero(n);
  // Column-major scratch: a row is read with stride m, a column contiguously.
  Matrix work(m, n);

  // One f/g sweep at regularisation e; returns the L1 row-marginal violation.
  auto sweep = [&](double e) {
    const double damping = balanced ? 1.0 : beta / (beta + e);
    // f_i = -e log sum_j b_j exp((g_j - C_ij)/e)
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j)
        work(i, j) = log_b(j) + (g(j) - cost(i, j)) / e;
    for (Index i = 0; i < m; ++i)
      f(i) = -e * log_sum_exp(work.data() + i, n, m);

    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j)
        work(i, j) = log_a(i) + (f(i) - cost(i, j)) / e;
    for (Index j = 0; j < n; ++j)
      g(j) = -damping * e * log_sum_exp(work.data() + j * m, m, 1);

    double err = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (log_a(i) == kNegInf)
        continue;
      for (Index j = 0; j < n; ++j)
        work(i, j) = log_b(j) + (f(i) + g(j) - cost(i, j)) / e;
      const double row = std::exp(log_a(i) + log_sum_exp(work.data() + i, n, m));
      err += std::abs(row - mu.weights(i));
    }
    if (!std::isfinite(err))
      throw std::runtime_error("sinkhorn: non-finite iterate");
    return err;
  };

  Coupling out;
  out.eps = eps;
  int it = 0;
  double err = std::numeric_limits<double>::infinity();

  constexpr double kStageTol = 1e-4;
  constexpr int kStageCap = 200;
  for (double e = std::max(eps, cost.maxCoeff()); e > eps && it < options.max_iters; e = std::max(eps, 0.5 * e))
    for (int k = 0; k < kStageCap && it < options.max_iters; ++k) {
      ++it;
      if (sweep(e) < kStageTol)
        break;
    }
  while (it < options.max_iters) {
    ++it;
    err = sweep(eps);
    if (err < options.tol) {
      out.converged = true;
      break;
    }
    if (balanced && n > 1 && it < options.max_iters) {
      ++it;
      newton_step(cost, mu.weights, nu.weights, log_a, log_b, eps, f, g);
    }
  }

  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      const double v = log_a(i) + log_b(j) + (f(i) + g(j) - cost(i, j)) / eps;
      work(i, j) = v == kNegInf ? 0.0 : std::exp(v);
    }
  out.pi = work;
  out.iterations = it;
  out.marginal_error = out.converged ? err : (out.pi.rowwise().sum() - mu.weights).lpNorm<1>();
  return out;
}

} // namespace

DiscreteMeasure DiscreteMeasure::uniform(Matrix support) {
  DiscreteMeasure m;
  const Index n = support.rows();
  m.weights = Vector::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  m.support = std::move(support);
  return m;
}

void DiscreteMeasure::validate() const {
  if (weights.size() != support.rows())
    throw std::invalid_argument("DiscreteMeasure: weight count != support rows");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("DiscreteMeasure: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("DiscreteMeasure: weights do not sum to one");
  if (!support.allFinite())
    throw std::invalid_argument("DiscreteMeasure: non-finite support");
}

Matrix squared_euclidean_cost(const Matrix &u, const Matrix &v) {
  if (u.cols() != v.cols())
    throw std::invalid_argument("squared_euclidean_cost: dimension mismatch");
  Matrix c(u.rows(), v.rows());
  for (Index i = 0; i < u.rows(); ++i)
    for (Index j = 0; j < v.rows(); ++j)
      c(i, j) = (u.row(i) - v.row(j)).squaredNorm();
  return c;
}

Coupling sinkhorn_eot(const DiscreteMeasure &mu, const DiscreteMeasure &nu, double eps,
                      SinkhornOptions options) {
  check_inputs(mu, nu, eps);
  Coupling c = solve(mu, nu, eps, std::numeric_limits<double>::infinity(), options);
  c.mode = CouplingMode::Balanced;
  return c;
}

Coupling sinkhorn_uot_one_sided(const DiscreteMeasure &mu, const DiscreteMeasure &nu,
                                double eps, double beta, SinkhornOptions options) {
  check_inputs(mu, nu, eps);
  if (!(beta > 0.0))
    throw std::invalid_argument("sinkhorn_uot_one_sided: beta must be positive");
  Coupling c = solve(mu, nu, eps, beta, options);
  c.mode = CouplingMode::OneSidedUnbalanced;
  c.beta = beta;
  return c;
}

HandleWeights topk_renormalize(const RowVector &mass, int row, int k) {
  const int n = static_cast<int>(mass.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("topk_renormalize: K must lie in [1, n]");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mass(a) > mass(b); });
  order.resize(static_cast<std::size_t>(k));

  double total = 0.0;
  for (int j : order)
    total += mass(j);
  if (!(total > 0.0))
    throw std::runtime_error("degenerate coupling row");

  HandleWeights out;
  out.variable = row;
  out.sites = order;
  out.weights.reserve(order.size());
  for (int j : order)
    out.weights.push_back(mass(j) / total);
  return out;
}

HandleWeights topk_renormalize(const Coupling &coupling, int row, int k) {
  if (row < 0 || row >= coupling.pi.rows())
    throw std::out_of_range("topk_renormalize: row out of range");
  return topk_renormalize(RowVector(coupling.pi.row(row)), row, k);
}

std::string to_string(CouplingMode mode) {
  return mode == CouplingMode::Balanced ? "balanced" : "one-sided-unbalanced";
}

std::string coupling_to_csv(const Coupling &coupling) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index i = 0; i < coupling.pi.rows(); ++i) {
    for (Index j = 0; j < coupling.pi.cols(); ++j) {
      if (j)
        os << ',';
      os << coupling.pi(i, j);
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json to_json(const Coupling &coupling) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < coupling.pi.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(coupling.pi.cols()));
    for (Index j = 0; j < coupling.pi.cols(); ++j)
      r[static_cast<std::size_t>(j)] = coupling.pi(i, j);
    rows.push_back(r);
  }
  nlohmann::json j = {{"pi", rows},
                      {"eps", coupling.eps},
                      {"mode", to_string(coupling.mode)},
                      {"iterations", coupling.iterations},
                      {"converged", coupling.converged},
                      {"marginal_error", coupling.marginal_error}};
  if (coupling.mode == CouplingMode::OneSidedUnbalanced)
    j["beta"] = coupling.beta;
  return j;
}

nlohmann::json to_json(const HandleWeights &w) {
  return {{"variable", w.variable}, {"sites", w.sites}, {"weights", w.weights}};
}

} // namespace plot
