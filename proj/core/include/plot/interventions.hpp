// SPDX-License-Identifier: Apache-2.0
/**
 * @file   interventions.hpp
 * @brief  Neural sites, swaps, soft handles and learned-rotation (DAS)
 *         interventions.
 *
 * Activations are handled in row form: a batch of B activations at one
 * location is a B x d matrix, and a site with orthonormal columns W (d x r)
 * maps it to coordinates (a - mean) W.
 */
#ifndef PLOT_INTERVENTIONS_HPP
#define PLOT_INTERVENTIONS_HPP

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plot/backbones.hpp"
#include "plot/numerics.hpp"
#include "plot/transport.hpp"

namespace plot {

struct SiteSpec {
  int location = 0;
  Matrix W;       ///< d x r, orthonormal columns
  RowVector mean; ///< length d
  std::string label;

  Index dim() const { return W.rows(); }
  Index rank() const { return W.cols(); }
  /// Throws std::invalid_argument on shape mismatch or non-orthonormal W.
  void validate(double tol = 1e-8) const;
};

/// Coordinates h = (a - mean) W for every row of @p a.
Matrix site_project(const SiteSpec &site, const Matrix &a);

/// a_base + (h(source) - h(base)) W^T, row by row.
Matrix neural_swap(const SiteSpec &site, const Matrix &a_base, const Matrix &a_source);

/// Single coordinate @p index of a d-dimensional state.
SiteSpec canonical_site(int location, Index d, Index index, std::string label = {});
/// Every coordinate of every location, location-major.
std::vector<SiteSpec> canonical_sites(const NeuralModel &model);
/// Contiguous coordinate groups of size @p r (last group may be shorter).
std::vector<SiteSpec> group_sites(int location, Index d, Index r);
SiteSpec full_vector_site(int location, Index d);
/// Sites spanned by the leading columns of @p basis, one per prefix size.
std::vector<SiteSpec> prefix_sites(int location, const Matrix &basis, const RowVector &mean,
                                   const std::vector<Index> &prefixes);
/// 1, 2, 4, ... up to and including d (d appended when not a power of two).
std::vector<Index> doubling_sizes(Index d);

struct Handle {
  int variable = 0;
  std::vector<SiteSpec> sites; ///< the selected sites, aligned with weights
  HandleWeights weights;
  double lambda = 1.0;

  void validate() const;
};

/**
 * Builds the patch plan for @p handle. At each location touched by the
 * handle, the live state a becomes
 *   a + lambda * sum_j w_j (h_j(source) - h_j(a)) W_j^T
 * with sources read from @p source (a clean trace, row-aligned with the
 * base batch).
 */
PatchPlan handle_plan(const Handle &handle, const ActivationTrace &source);

/// Logits of the base batch under @p handle.
Matrix apply_handle(const NeuralModel &model, const Handle &handle, const ActivationTrace &base,
                    const Matrix &base_x, const ActivationTrace &source);

/**
 * @brief Orthogonal change of basis at one location.
 *
 * R = pre * R0 * cayley(skew(S)) where R0 is a fixed random orthogonal
 * matrix, S is trainable (zero at initialisation) and pre is an optional
 * fixed orthogonal pre-rotation.
 */
struct DasRotation {
  int location = 0;
  int k = 1;
  Matrix R0;
  Parameter S;
  std::optional<Matrix> pre;

  DasRotation() = default;
  DasRotation(int location, Index d, int k, Rng &rng);

  Index dim() const { return R0.rows(); }
  Matrix rotation() const;
  void validate() const;
};

/// Swaps the first k rotated coordinates of each base row for the source's.
Matrix das_intervene(const DasRotation &rot, const Matrix &a_base, const Matrix &a_source);

PatchPlan das_plan(const DasRotation &rot, const ActivationTrace &source);

struct DasTrainConfig {
  double lr = 1e-2;
  int max_epochs = 100;
  int patience = 10;
  int batch = 64;
};

struct DasTrainResult {
  DasRotation rotation;
  int epochs = 0;
  double fit_accuracy = 0.0;
  /// ||R^T R - I||_inf after every epoch.
  std::vector<double> orthogonality;
};

/**
 * Trains a rotation at @p location so that swapping the first k rotated
 * coordinates reproduces @p targets, the counterfactual labels of the
 * abstract model (class index or 5-bit number by model output kind).
 * The returned rotation is the one with the best fit accuracy seen.
 */
DasTrainResult das_train(const NeuralModel &model, int location, int k, const Matrix &base_x,
                         const ActivationTrace &base, const ActivationTrace &source,
                         const std::vector<int> &targets, Rng rng, const DasTrainConfig &config = {});

nlohmann::json to_json(const SiteSpec &site);
SiteSpec site_from_json(const nlohmann::json &j);
nlohmann::json to_json(const Handle &handle);
Handle handle_from_json(const nlohmann::json &j);
nlohmann::json to_json(const DasRotation &rot);
DasRotation rotation_from_json(const nlohmann::json &j);

nlohmann::json matrix_to_json(const Matrix &m);
Matrix matrix_from_json(const nlohmann::json &j);

} // namespace plot

#endif // PLOT_INTERVENTIONS_HPP
