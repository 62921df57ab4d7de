// SPDX-License-Identifier: Apache-2.0
/**
 * @file   causal.hpp
 * @brief  Abstract causal models with do() overrides: hierarchical equality
 *         and the 4-bit ripple-carry adder.
 *
 * Both models expose the same static surface (forward with an override map,
 * output label, swap, change test) so pair banks and experiment drivers can
 * be written once for either task.
 */
#ifndef PLOT_CAUSAL_HPP
#define PLOT_CAUSAL_HPP

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "plot/numerics.hpp"

namespace plot {

/// Intervened variable index -> forced value.
using DoMap = std::map<int, int>;

// ---------------------------------------------------------------------------
// Hierarchical equality

struct HeqInput {
  int w = 1, x = 1, y = 1, z = 1;
  friend bool operator==(const HeqInput &, const HeqInput &) = default;
};

struct HeqState {
  int z_wx = 0;
  int z_yz = 0;
  int y = 0;
};

struct HeqCausal {
  using Input = HeqInput;
  using State = HeqState;

  enum Var : int { kWX = 0, kYZ = 1 };
  static constexpr int kNumVars = 2;
  static constexpr int kMinValue = 1;
  static constexpr int kMaxValue = 100;

  static std::string_view var_name(int var);
  static int var_index(std::string_view name);

  /// Throws std::invalid_argument when any entry is outside [1, 100].
  static void validate(const Input &in);
  static State forward(const Input &in, const DoMap &overrides = {});
  static int variable(const State &s, int var);
  static int output(const Input &in) { return forward(in).y; }
  /// y of @p base with @p var forced to its value under @p source.
  static int swap(const Input &base, const Input &source, int var);
  static bool changes(const Input &base, const Input &source, int var);
};

/// Input whose equality bits are fixed; unequal pairs are uniform over
/// distinct values.
HeqInput sample_heq_input(Rng &rng, int z_wx, int z_yz);
/// Both equality bits drawn from Bernoulli(1/2).
HeqInput sample_heq_input(Rng &rng);

// ---------------------------------------------------------------------------
// 4-bit ripple-carry adder

/// Bits are least-significant first: a[0] is A_0.
struct AdderInput {
  std::array<int, 4> a{};
  std::array<int, 4> b{};

  static AdderInput from_ints(int a, int b);
  int a_value() const;
  int b_value() const;
  /// Inputs enumerated as a * 16 + b.
  int index() const { return a_value() * 16 + b_value(); }
  friend bool operator==(const AdderInput &, const AdderInput &) = default;
};

struct AdderState {
  std::array<int, 4> sum{};   ///< S_0..S_3
  std::array<int, 4> carry{}; ///< C_1..C_4 at positions 0..3

  /// y = (C_4, S_3, S_2, S_1, S_0) read as a 5-bit number.
  int output() const;
};

struct AdderCausal {
  using Input = AdderInput;
  using State = AdderState;

  /// Variable i is carry C_{i+1}.
  enum Var : int { kC1 = 0, kC2 = 1, kC3 = 2, kC4 = 3 };
  static constexpr int kNumVars = 4;

  static std::string_view var_name(int var);
  static int var_index(std::string_view name);

  static void validate(const Input &in);
  static State forward(const Input &in, const DoMap &overrides = {});
  static int variable(const State &s, int var);
  static int output(const Input &in) { return forward(in).output(); }
  static int swap(const Input &base, const Input &source, int var);
  static bool changes(const Input &base, const Input &source, int var);
};

/// Output bits in logit order (C_4, S_3, S_2, S_1, S_0) of a 5-bit label.
std::array<int, 5> adder_label_bits(int label);

} // namespace plot

#endif // PLOT_CAUSAL_HPP
