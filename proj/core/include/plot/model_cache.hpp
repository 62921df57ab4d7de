// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model_cache.hpp
 * @brief  Seeded retries around backbone training and an on-disk cache of
 *         trained models.
 *
 * A failed attempt is retried with a training seed derived from the
 * experiment seed; the experiment seed still drives banks and every
 * downstream random choice.
 */
#ifndef PLOT_MODEL_CACHE_HPP
#define PLOT_MODEL_CACHE_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "plot/backbones.hpp"

namespace plot {

/// Attempt 0 trains with @p seed itself.
std::uint64_t derived_train_seed(std::uint64_t seed, int attempt);

struct RetryPolicy {
  int max_attempts = 64;
};

/// Trains until an exact fit; rethrows the last TrainingFailure after
/// max_attempts. Metadata gains experiment_seed, train_seed and attempts.
HeqMlp train_heq_with_retries(std::uint64_t seed, const HeqTrainConfig &config = {},
                              const RetryPolicy &policy = {});
GruAdder train_adder_with_retries(int hidden, std::uint64_t seed, const GruTrainConfig &config = {},
                                  const RetryPolicy &policy = {});

std::string config_hash(const HeqTrainConfig &config);
std::string config_hash(int hidden, const GruTrainConfig &config);

/// $PLOT_CACHE_DIR, or "plot_cache" under the working directory.
std::filesystem::path default_cache_dir();

class ModelCache {
public:
  explicit ModelCache(std::filesystem::path dir = default_cache_dir(), bool train_if_missing = true);

  std::filesystem::path heq_path(std::uint64_t seed, const HeqTrainConfig &config = {}) const;
  std::filesystem::path adder_path(int hidden, std::uint64_t seed, const GruTrainConfig &config = {}) const;

  /// Loads a cached model or trains and stores one. Throws std::runtime_error
  /// when the file is missing and training is disabled.
  HeqMlp heq(std::uint64_t seed, const HeqTrainConfig &config = {}, const RetryPolicy &policy = {}) const;
  GruAdder adder(int hidden, std::uint64_t seed, const GruTrainConfig &config = {},
                 const RetryPolicy &policy = {}) const;

  const std::filesystem::path &dir() const { return dir_; }

private:
  std::filesystem::path dir_;
  bool train_if_missing_;
};

} // namespace plot

#endif // PLOT_MODEL_CACHE_HPP
