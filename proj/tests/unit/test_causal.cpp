// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "generators.hpp"
#include "plot/causal.hpp"

using namespace plot;

namespace {

constexpr int kWX = HeqCausal::kWX;
constexpr int kYZ = HeqCausal::kYZ;

/// (C4, S3, S2, S1, S0) bits of a 5-bit number.
std::array<int, 5> bits_of(int v) { return {(v >> 4) & 1, (v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1}; }

} // namespace

TEST(Heq, PaperStyleExamples) {
  EXPECT_EQ(HeqCausal::output({1, 1, 2, 2}), 1);
  EXPECT_EQ(HeqCausal::output({1, 2, 3, 4}), 1);
  EXPECT_EQ(HeqCausal::output({1, 1, 1, 2}), 0);
}

TEST(Heq, StateFields) {
  const HeqState s = HeqCausal::forward({5, 5, 7, 8});
  EXPECT_EQ(s.z_wx, 1);
  EXPECT_EQ(s.z_yz, 0);
  EXPECT_EQ(s.y, 0);
  EXPECT_EQ(HeqCausal::variable(s, kWX), 1);
  EXPECT_EQ(HeqCausal::variable(s, kYZ), 0);
}

TEST(Heq, DoOverrides) {
  const HeqState s = HeqCausal::forward({1, 1, 2, 2}, {{kWX, 0}});
  EXPECT_EQ(s.z_wx, 0);
  EXPECT_EQ(s.z_yz, 1);
  EXPECT_EQ(s.y, 0);
}

TEST(Heq, SwapExamples) {
  EXPECT_EQ(HeqCausal::swap({1, 1, 2, 2}, {1, 2, 3, 4}, kWX), 0);
  EXPECT_EQ(HeqCausal::swap({1, 1, 1, 2}, {1, 1, 2, 2}, kYZ), 1);
  EXPECT_EQ(HeqCausal::swap({1, 1, 2, 2}, {3, 3, 9, 9}, kWX), HeqCausal::output({1, 1, 2, 2}));
}

TEST(Heq, ChangesExamples) {
  const HeqInput base{1, 1, 2, 2};
  EXPECT_FALSE(HeqCausal::changes(base, base, kWX));
  EXPECT_FALSE(HeqCausal::changes(base, base, kYZ));
  EXPECT_TRUE(HeqCausal::changes(base, {1, 2, 2, 2}, kWX));
  EXPECT_FALSE(HeqCausal::changes(base, {1, 2, 2, 2}, kYZ));
}

TEST(Heq, ValidationRejectsOutOfRange) {
  EXPECT_THROW(HeqCausal::validate({0, 1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(HeqCausal::validate({1, 1, 1, 101}), std::invalid_argument);
  EXPECT_NO_THROW(HeqCausal::validate({1, 100, 50, 2}));
}

TEST(Heq, VariableNamesRoundTrip) {
  for (int v = 0; v < HeqCausal::kNumVars; ++v)
    EXPECT_EQ(HeqCausal::var_index(HeqCausal::var_name(v)), v);
  EXPECT_THROW(HeqCausal::var_index("z_XY"), std::invalid_argument);
}

TEST(HeqProperty, SameValueSwapIsFactual) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const HeqInput base = testgen::random_heq_input(rng);
    const HeqInput source = testgen::random_heq_input(rng);
    for (int v = 0; v < HeqCausal::kNumVars; ++v)
      if (!HeqCausal::changes(base, source, v)) {
        ASSERT_EQ(HeqCausal::swap(base, source, v), HeqCausal::output(base));
      }
  }
}

TEST(HeqProperty, InvariantToPermutingWithinPairs) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const HeqInput in = testgen::balanced_heq_input(rng);
    const int y = HeqCausal::output(in);
    ASSERT_EQ(HeqCausal::output({in.x, in.w, in.y, in.z}), y);
    ASSERT_EQ(HeqCausal::output({in.w, in.x, in.z, in.y}), y);
  }
}

TEST(HeqProperty, SamplerRealisesRequestedBits) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int a = rng.uniform_int(0, 1), b = rng.uniform_int(0, 1);
    const HeqState s = HeqCausal::forward(sample_heq_input(rng, a, b));
    ASSERT_EQ(s.z_wx, a);
    ASSERT_EQ(s.z_yz, b);
  }
}

TEST(Adder, ZeroPlusZero) {
  const AdderState s = AdderCausal::forward(AdderInput::from_ints(0, 0));
  EXPECT_EQ(s.output(), 0);
  EXPECT_EQ(s.carry, (std::array<int, 4>{0, 0, 0, 0}));
}

TEST(Adder, FifteenPlusOne) {
  const AdderState s = AdderCausal::forward(AdderInput::from_ints(15, 1));
  EXPECT_EQ(s.carry, (std::array<int, 4>{1, 1, 1, 1}));
  EXPECT_EQ(adder_label_bits(s.output()), (std::array<int, 5>{1, 0, 0, 0, 0}));
}

TEST(Adder, TruthTableMatchesIntegerAddition) {
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 16; ++b) {
      const AdderInput in = AdderInput::from_ints(a, b);
      ASSERT_EQ(in.a_value(), a);
      ASSERT_EQ(in.b_value(), b);
      ASSERT_EQ(in.index(), a * 16 + b);
      ASSERT_EQ(AdderCausal::output(in), a + b);
      ASSERT_EQ(adder_label_bits(a + b), bits_of(a + b));
    }
}

TEST(Adder, SwapCarryOne) {
  const AdderInput base = AdderInput::from_ints(0, 0);
  const AdderInput source = AdderInput::from_ints(15, 1);
  EXPECT_EQ(adder_label_bits(AdderCausal::swap(base, source, AdderCausal::kC1)),
            (std::array<int, 5>{0, 0, 0, 1, 0}));
}

TEST(Adder, ChangesOnLowBits) {
  const AdderInput base = AdderInput::from_ints(0, 0);
  EXPECT_TRUE(AdderCausal::changes(base, AdderInput::from_ints(1, 1), AdderCausal::kC1));
  for (int v = 0; v < AdderCausal::kNumVars; ++v)
    EXPECT_FALSE(AdderCausal::changes(base, base, v));
}

TEST(Adder, InvalidBitsRejected) {
  AdderInput in;
  in.a[2] = 2;
  EXPECT_THROW(AdderCausal::validate(in), std::invalid_argument);
  EXPECT_THROW(AdderInput::from_ints(16, 0), std::invalid_argument);
}

TEST(AdderProperty, SameValueSwapIsFactualExhaustive) {
  const std::vector<AdderInput> all = [] {
    std::vector<AdderInput> v;
    for (int i = 0; i < 256; ++i)
      v.push_back(AdderInput::from_ints(i / 16, i % 16));
    return v;
  }();
  for (const AdderInput &base : all)
    for (const AdderInput &source : all)
      for (int v = 0; v < AdderCausal::kNumVars; ++v)
        if (!AdderCausal::changes(base, source, v)) {
          ASSERT_EQ(AdderCausal::swap(base, source, v), AdderCausal::output(base));
        }
}

TEST(AdderProperty, DoNeverChangesUpstreamExhaustive) {
  for (int idx = 0; idx < 256; ++idx) {
    const AdderInput in = AdderInput::from_ints(idx / 16, idx % 16);
    const AdderState clean = AdderCausal::forward(in);
    for (int var = 0; var < AdderCausal::kNumVars; ++var) {
      for (int value = 0; value < 2; ++value) {
        const AdderState s = AdderCausal::forward(in, {{var, value}});
        ASSERT_EQ(s.carry[static_cast<std::size_t>(var)], value);
        for (int j = 0; j <= var; ++j)
          ASSERT_EQ(s.sum[static_cast<std::size_t>(j)], clean.sum[static_cast<std::size_t>(j)]);
        for (int j = 0; j < var; ++j)
          ASSERT_EQ(s.carry[static_cast<std::size_t>(j)], clean.carry[static_cast<std::size_t>(j)]);
      }
    }
  }
}

TEST(AdderProperty, SwapRecomputesDownstreamWithBaseBits) {
  Rng rng(4);
  for (int trial = 0; trial < 2000; ++trial) {
    const AdderInput base = testgen::random_adder_input(rng);
    const AdderInput source = testgen::random_adder_input(rng);
    const int var = rng.uniform_int(0, 3);
    const int c = AdderCausal::variable(AdderCausal::forward(source), var);
    // Oracle: integer addition of the bits above the carry position.
    const int shift = var + 1;
    const int low = (base.a_value() + base.b_value()) & ((1 << shift) - 1);
    const int high = (base.a_value() >> shift) + (base.b_value() >> shift) + c;
    ASSERT_EQ(AdderCausal::swap(base, source, var), (high << shift) | low) << "trial " << trial;
  }
}
