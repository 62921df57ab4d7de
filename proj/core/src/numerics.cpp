// SPDX-License-Identifier: Apache-2.0
#include "plot/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace plot {

Matrix matmul(const Matrix &a, const Matrix &b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: dimension mismatch (" +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " by " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  return a * b;
}

Vector softmax(const Vector &v) {
  if (v.size() == 0)
    return v;
  const double shift = v.maxCoeff();
  Vector e = (v.array() - shift).exp().matrix();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix &logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double shift = logits.row(i).maxCoeff();
    RowVector e = (logits.row(i).array() - shift).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix &x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

bool all_finite(const Matrix &m) { return m.allFinite(); }

double orthogonality_error(const Matrix &m) {
  const Matrix gram = m.transpose() * m;
  return (gram - Matrix::Identity(gram.rows(), gram.cols()))
      .cwiseAbs()
      .maxCoeff();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::string_view label) const {
  return Rng(splitmix64(seed_ ^ splitmix64(fnv1a(label))));
}

Rng Rng::split(std::uint64_t label) const {
  return Rng(splitmix64(seed_ ^ splitmix64(label + 0x632BE59BD9B4E019ULL)));
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

int Rng::uniform_int(int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

Matrix gaussian_matrix(Index rows, Index cols, Rng &rng) {
  Matrix m(rows, cols);
  // Row-major fill so the draw order is independent of Eigen's storage order.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = rng.normal();
  return m;
}

Matrix uniform_matrix(Index rows, Index cols, double lo, double hi, Rng &rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = rng.uniform(lo, hi);
  return m;
}

Matrix random_orthogonal(Index d, Rng &rng) {
  const Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0)
      q.col(j) *= -1.0;
  return q;
}

void Adam::step(std::span<Parameter *const> params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter *p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("Adam::step: parameter list changed size");

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter &p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        m_[i].rows() != p.value.rows() || m_[i].cols() != p.value.cols())
      throw std::invalid_argument("Adam::step: shape mismatch for " + p.name);
    m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
    v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= config_.lr * (m_[i].array() / c1) /
                       ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

PcaResult pca_fit(const Matrix &samples) {
  const Index t = samples.rows();
  const Index d = samples.cols();
  if (t < 2)
    throw std::invalid_argument("pca_fit: need at least two samples");

  PcaResult out;
  out.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - out.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(t - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("pca_fit: eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector &vals = eig.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return vals(a) > vals(b); });

  out.rotation.resize(d, d);
  out.explained_variance.resize(d);
  for (Index j = 0; j < d; ++j) {
    Vector col = eig.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    for (Index i = 0; i < d; ++i) {
      if (std::abs(col(i)) > 1e-12) {
        if (col(i) < 0.0)
          col = -col;
        break;
      }
    }
    out.rotation.col(j) = col;
    out.explained_variance(j) = std::max(0.0, vals(order[static_cast<std::size_t>(j)]));
  }
  return out;
}

double grad_check(const std::function<double(bool)> &loss,
                  std::span<Parameter *const> params, double h) {
  for (Parameter *p : params)
    p->zero_grad();
  loss(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Parameter *p : params)
    analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter &p = *params[k];
    for (Index i = 0; i < p.value.rows(); ++i) {
      for (Index j = 0; j < p.value.cols(); ++j) {
        const double saved = p.value(i, j);
        p.value(i, j) = saved + h;
        const double up = loss(false);
        p.value(i, j) = saved - h;
        const double down = loss(false);
        p.value(i, j) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(up), std::abs(down)) / h;
        const double err = std::max(0.0, std::abs(analytic[k](i, j) - fd) - noise) / (std::abs(fd) + 1e-8);
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

} // namespace plot
