// SPDX-License-Identifier: Apache-2.0
// Checks that need trained backbones. Models come from the cache directory
// and are trained on first use.
#include <gtest/gtest.h>

#include <cstdlib>

#include "plot/model_cache.hpp"
#include "plot/pipeline.hpp"

using namespace plot;

namespace {

ModelCache cache() {
  if (const char *env = std::getenv("PLOT_CACHE_DIR"); env && *env)
    return ModelCache(env, true);
  return ModelCache(PLOT_TEST_CACHE_DIR, true);
}

const HeqMlp &heq() {
  static const HeqMlp m = cache().heq(0);
  return m;
}

const GruAdder &adder() {
  static const GruAdder m = cache().adder(16, 0);
  return m;
}

const AdderBanks &adder_banks() {
  static const AdderBanks b = gen_adder_banks(0);
  return b;
}

const StageA &stage_a() {
  static const StageA a = run_addition_plot(adder(), adder_banks());
  return a;
}

int heq_predict(const HeqInput &in) {
  const std::vector<HeqInput> one{in};
  return heq().decode(heq().forward(heq().encode(one))).front();
}

int add(int a, int b) {
  const std::vector<AdderInput> one{AdderInput::from_ints(a, b)};
  return adder().decode(adder().forward(GruAdder::encode(one))).front();
}

} // namespace

TEST(TrainedHeq, Examples) {
  EXPECT_EQ(heq_predict({1, 1, 2, 2}), 1);
  EXPECT_EQ(heq_predict({1, 1, 1, 2}), 0);
  EXPECT_EQ(heq_predict({3, 4, 5, 5}), 0);
  EXPECT_EQ(heq_predict({3, 4, 5, 6}), 1);
  EXPECT_DOUBLE_EQ(heq().metadata.at("validation_accuracy").get<double>(), 1.0);
}

TEST(TrainedHeq, EmbeddingIsFrozenDuringTraining) {
  const auto train_seed = heq().metadata.at("train_seed").get<std::uint64_t>();
  EXPECT_EQ(heq().embedding(), HeqMlp(train_seed).embedding());
}

TEST(TrainedHeq, UnintervenedAccuracyOnInvariantBankIsOne) {
  const HeqBanks banks = gen_heq_banks(0);
  const TracedBank test = TracedBank::make(heq(), encode_bank(heq(), banks.test));
  for (const Partition &p : banks.test_partitions) {
    EXPECT_DOUBLE_EQ(interchange_accuracy(heq(), test.subset(p.invariant), p.variable, PlanFactory{}), 1.0);
    EXPECT_DOUBLE_EQ(interchange_accuracy(heq(), test.subset(p.sensitive), p.variable, PlanFactory{}), 0.0);
  }
}

TEST(TrainedAdder, ExactOnTheWholeTable) {
  EXPECT_DOUBLE_EQ(adder().metadata.at("table_accuracy").get<double>(), 1.0);
  for (int a = 0; a < 16; ++a)
    for (int b = 0; b < 16; ++b)
      ASSERT_EQ(add(a, b), a + b) << a << "+" << b;
  EXPECT_EQ(add(15, 1), 16);
  EXPECT_EQ(add(0, 0), 0);
}

TEST(TrainedAdder, StageACouplingRowsCarryOneThird) {
  const Matrix &pi = stage_a().coupling.pi;
  ASSERT_EQ(pi.rows(), 3);
  ASSERT_EQ(pi.cols(), 4);
  for (Index i = 0; i < 3; ++i)
    EXPECT_NEAR(pi.row(i).sum(), 1.0 / 3.0, 1e-6);
  EXPECT_EQ(stage_a().timesteps.size(), 3u);
}

TEST(TrainedAdder, FullRankDasMatchesFullVectorPatch) {
  const TracedBank test = TracedBank::make(adder(), encode_bank(adder_banks().test));
  const int d = adder().hidden();
  Rng rng(0);
  for (int var = 0; var < 3; ++var) {
    const int step = stage_a().timesteps[static_cast<std::size_t>(var)];
    const DasRotation rot(step, d, d, rng);
    Handle h;
    h.variable = var;
    h.sites = {full_vector_site(step, d)};
    h.weights.variable = var;
    h.weights.sites = {0};
    h.weights.weights = {1.0};
    h.lambda = 1.0;
    EXPECT_GE(interchange_accuracy(adder(), test, rot, var), interchange_accuracy(adder(), test, h) - 0.02) << var;
  }
}

TEST(TrainedAdder, RerunIsDeterministic) {
  const StageA again = run_addition_plot(adder(), adder_banks());
  EXPECT_EQ(again.timesteps, stage_a().timesteps);
  EXPECT_EQ(again.coupling.pi, stage_a().coupling.pi);
  ASSERT_EQ(again.result.variables.size(), stage_a().result.variables.size());
  for (std::size_t v = 0; v < again.result.variables.size(); ++v) {
    EXPECT_EQ(again.result.variables[v].sensitivity, stage_a().result.variables[v].sensitivity);
    EXPECT_EQ(again.result.variables[v].invariance, stage_a().result.variables[v].invariance);
  }
}

TEST(TrainedAdder, VariantRuntimeIncludesStageA) {
  const ExperimentResult nat = run_addition_variant(adder(), adder_banks(), AdditionMethod::Nat);
  EXPECT_GE(nat.runtime_seconds, stage_a().result.runtime_seconds);
  EXPECT_EQ(nat.details.at("stage_a_timesteps").get<std::vector<int>>(), stage_a().timesteps);
}
