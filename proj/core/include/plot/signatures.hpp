// SPDX-License-Identifier: Apache-2.0
/**
 * @file   signatures.hpp
 * @brief  Output effect signatures of abstract variables and neural sites,
 *         and the empirical measures built from them.
 *
 * A signature stacks, pair by pair in bank order, the change in featurised
 * output caused by one swap: T pairs and a p-dimensional featuriser give a
 * row of length T * p.
 */
#ifndef PLOT_SIGNATURES_HPP
#define PLOT_SIGNATURES_HPP

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "plot/banks.hpp"
#include "plot/interventions.hpp"
#include "plot/transport.hpp"

namespace plot {

enum class FeaturizerKind { Softmax, SigmoidBits };

struct Featurizer {
  FeaturizerKind kind = FeaturizerKind::Softmax;
  Index dim = 2;

  /// Softmax for categorical models, elementwise sigmoid for bit outputs.
  static Featurizer for_model(const NeuralModel &model);

  /// B x p features of B x p logits.
  Matrix of_logits(const Matrix &logits) const;
  /// Abstract label as a one-hot class (Softmax) or its bits MSB first.
  RowVector of_label(int label) const;
  Matrix of_labels(const std::vector<int> &labels) const;
};

std::string to_string(FeaturizerKind kind);

/// Row-major flattening of B x p per-pair deltas into one 1 x (B * p) row.
RowVector stack_rows(const Matrix &per_pair);

/// phi(y with var swapped) - phi(y), stacked over the bank.
RowVector abstract_signature(const EncodedBank &bank, int var, const Featurizer &phi);

/// phi(logits after neural_swap at @p site) - phi(factual logits), stacked.
RowVector neural_signature(const NeuralModel &model, const SiteSpec &site, const TracedBank &bank,
                           const Featurizer &phi);

struct SignatureSet {
  Matrix abstract; ///< m x (T * p)
  Matrix neural;   ///< n x (T * p)
  std::vector<std::string> abstract_owners;
  std::vector<std::string> neural_owners;
  Featurizer featurizer;
  bool normalized = false;
};

/// Scales every nonzero row to unit L2 norm.
void normalize_rows(Matrix &rows);

/**
 * Signatures for @p vars against @p sites over @p fit. With @p normalize,
 * every nonzero row is scaled to unit L2 norm.
 */
SignatureSet build_signature_set(const NeuralModel &model, const TracedBank &fit,
                                 const std::vector<int> &vars, const std::vector<std::string> &var_names,
                                 const std::vector<SiteSpec> &sites, const Featurizer &phi, bool normalize);

/// Uniform measures over the abstract and neural rows.
std::pair<DiscreteMeasure, DiscreteMeasure> build_measures(const SignatureSet &set);

nlohmann::json to_json(const SignatureSet &set);
std::string signatures_to_csv(const SignatureSet &set);

} // namespace plot

#endif // PLOT_SIGNATURES_HPP
