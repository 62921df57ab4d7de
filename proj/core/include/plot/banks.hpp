// SPDX-License-Identifier: Apache-2.0
/**
 * @file   banks.hpp
 * @brief  Counterfactual pair banks: generation, verification,
 *         serialisation and encoding for a model.
 */
#ifndef PLOT_BANKS_HPP
#define PLOT_BANKS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plot/backbones.hpp"
#include "plot/causal.hpp"

namespace plot {

template <typename Causal> struct CounterfactualPair {
  typename Causal::Input base;
  typename Causal::Input source;
  /// changes[v] == Causal::changes(base, source, v)
  std::vector<bool> changes;

  static CounterfactualPair make(const typename Causal::Input &b, const typename Causal::Input &s) {
    CounterfactualPair p{b, s, {}};
    for (int v = 0; v < Causal::kNumVars; ++v)
      p.changes.push_back(Causal::changes(b, s, v));
    return p;
  }
};

/// Indices into a bank, split by one variable's change flag.
struct Partition {
  int variable = 0;
  std::vector<std::size_t> sensitive;
  std::vector<std::size_t> invariant;
};

template <typename Causal> struct BankSplit {
  using Pair = CounterfactualPair<Causal>;

  std::string policy;
  std::uint64_t seed = 0;
  std::vector<Pair> fit;
  std::vector<Pair> cal;
  std::vector<Pair> test;
  /// Per variable: the calibration pairs its handle is scored on.
  std::vector<std::vector<std::size_t>> cal_subsets;
  /// Per variable: sensitive / invariant test indices.
  std::vector<Partition> test_partitions;
  /// Carry-targeted sources that could not be found (adder policy only).
  int deficit = 0;
};

using HeqPair = CounterfactualPair<HeqCausal>;
using AdderPair = CounterfactualPair<AdderCausal>;
using HeqBanks = BankSplit<HeqCausal>;
using AdderBanks = BankSplit<AdderCausal>;

struct HeqBankConfig {
  int fit = 1000;
  int cal_per_var = 500;
  int test_per_bank = 1000;
  /// Mixed fit policy: P(only z_WX changes), P(only z_YZ changes); the rest
  /// leaves both unchanged.
  double p_wx = 0.25;
  double p_yz = 0.25;
  int max_attempts = 100000;
};

/// Fit, calibration and four test banks (z_WX sens, z_WX inv, z_YZ sens,
/// z_YZ inv, stored back to back in `test`). No (base, source) pair repeats.
HeqBanks gen_heq_banks(std::uint64_t seed, const HeqBankConfig &config = {});

struct AdderBankConfig {
  int fit_bases = 128;
  int cal_bases = 64;
  int test_bases = 64;
  /// Carry-targeted sources per base for C1..C4.
  std::array<int, 4> targeted{3, 5, 7, 3};
};

/// Shuffled 128/64/64 base split; each base gets 8 single-bit flips and then
/// the carry-targeted sources, in that order.
AdderBanks gen_adder_banks(std::uint64_t seed, const AdderBankConfig &config = {});

struct BankReport {
  bool ok = true;
  std::vector<std::string> violations;
  void fail(std::string what) {
    ok = false;
    violations.push_back(std::move(what));
  }
};

BankReport verify_bank(const HeqBanks &banks, const HeqBankConfig &config = {});
BankReport verify_bank(const AdderBanks &banks, const AdderBankConfig &config = {});

nlohmann::json to_json(const HeqBanks &banks);
nlohmann::json to_json(const AdderBanks &banks);
HeqBanks heq_banks_from_json(const nlohmann::json &j);
AdderBanks adder_banks_from_json(const nlohmann::json &j);

/**
 * @brief A bank in model-input form with its abstract labels.
 *
 * counterfactual[v][t] is the abstract output of pair t with variable v
 * swapped from source into base.
 */
struct EncodedBank {
  Matrix base_x;
  Matrix source_x;
  std::vector<int> factual;
  std::vector<std::vector<int>> counterfactual;
  std::vector<std::vector<bool>> changes;

  std::size_t size() const { return factual.size(); }
  int num_vars() const { return static_cast<int>(counterfactual.size()); }
  EncodedBank subset(const std::vector<std::size_t> &idx) const;
};

EncodedBank encode_bank(const HeqMlp &model, const std::vector<HeqPair> &pairs);
EncodedBank encode_bank(const std::vector<AdderPair> &pairs);

/// An encoded bank together with clean traces of its base and source inputs.
struct TracedBank {
  EncodedBank bank;
  ActivationTrace base;
  ActivationTrace source;

  static TracedBank make(const NeuralModel &model, EncodedBank bank);
  std::size_t size() const { return bank.size(); }
  TracedBank subset(const std::vector<std::size_t> &idx) const;
};

} // namespace plot

#endif // PLOT_BANKS_HPP
