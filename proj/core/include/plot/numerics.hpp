// SPDX-License-Identifier: Apache-2.0
/**
 * @file   numerics.hpp
 * @brief  Dense linear algebra helpers, seeded randomness, Adam and PCA.
 *
 * Matrices are Eigen dynamic matrices. Batched quantities store one example
 * per row (activations are B x d, logits are B x p).
 */
#ifndef PLOT_NUMERICS_HPP
#define PLOT_NUMERICS_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace plot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Checked product; throws std::invalid_argument on a.cols() != b.rows().
Matrix matmul(const Matrix &a, const Matrix &b);

/// Numerically stable softmax (max-shifted).
Vector softmax(const Vector &v);
/// Row-wise softmax of a B x p logit matrix.
Matrix softmax_rows(const Matrix &logits);

double sigmoid(double x);
Matrix sigmoid(const Matrix &x);

/// True when every entry is finite.
bool all_finite(const Matrix &m);

/// Largest absolute entry of (M^T M - I).
double orthogonality_error(const Matrix &m);

/**
 * @brief Seeded 64-bit generator. Child streams are derived by label so that
 *        independent consumers (embedding, banks, DAS init, ...) never share
 *        a stream and adding a consumer does not perturb the others.
 */
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  /// Child stream whose seed mixes this stream's seed with @p label.
  Rng split(std::string_view label) const;
  Rng split(std::uint64_t label) const;

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64 &engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal();
  /// Uniform integer in the closed range [lo, hi].
  int uniform_int(int lo, int hi);
  bool bernoulli(double p);

  template <typename It> void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// FNV-1a over bytes; stable across platforms.
std::uint64_t fnv1a(std::string_view bytes);

Matrix gaussian_matrix(Index rows, Index cols, Rng &rng);
Matrix uniform_matrix(Index rows, Index cols, double lo, double hi, Rng &rng);
/// Q factor of a Gaussian matrix, with column signs fixed so diag(R) > 0.
Matrix random_orthogonal(Index d, Rng &rng);

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are allocated lazily on the first step.
class Adam {
public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<Parameter *const> params);

  long steps() const { return step_; }
  const AdamConfig &config() const { return config_; }

private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct PcaResult {
  Vector mean;
  /// d x d, columns orthonormal, descending explained variance.
  Matrix rotation;
  Vector explained_variance;
};

/**
 * @brief Centered PCA through the eigendecomposition of the sample covariance.
 *
 * Each eigenvector is sign-normalised so that its first entry with magnitude
 * above 1e-12 is positive. Requires at least two samples.
 */
PcaResult pca_fit(const Matrix &samples);

/**
 * @brief Compares tape gradients against central finite differences.
 *
 * @p loss evaluates the scalar loss at the current parameter values; when
 * its argument is true it must also run the backward pass so that each
 * Parameter::grad holds the analytic gradient.
 * Returns max (|analytic - fd| - noise) / (|fd| + 1e-8) over all
 * coordinates, clamped at 0, where noise = 8 eps_mach max(|L+|, |L-|) / h
 * bounds the rounding error of the difference quotient.
 */
double grad_check(const std::function<double(bool with_backward)> &loss,
                  std::span<Parameter *const> params, double h = 1e-5);

} // namespace plot

#endif // PLOT_NUMERICS_HPP
