// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "generators.hpp"
#include "planted.hpp"
#include "plot/interventions.hpp"

using namespace plot;
using testgen::PlantedBank;
using testgen::PlantedModel;

namespace {

struct PlantedRun {
  PlantedModel model;
  PlantedBank bank = testgen::planted_bank();
  ActivationTrace base;
  ActivationTrace source;

  PlantedRun() : base(model.trace(bank.base_x)), source(model.trace(bank.source_x)) {}

  DasTrainResult train(int k, std::uint64_t seed, DasTrainConfig cfg = {}) const {
    return das_train(model, 0, k, bank.base_x, base, source, bank.counterfactual, Rng(seed), cfg);
  }
};

} // namespace

TEST(DasTrain, PlantedNeuronIsFoundWithOneDimension) {
  const PlantedRun run;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    DasTrainConfig cfg;
    cfg.lr = 5e-2;
    cfg.max_epochs = 300;
    cfg.patience = 300;
    cfg.batch = 16;
    const DasTrainResult r = run.train(1, seed, cfg);
    EXPECT_GE(r.fit_accuracy, 0.99) << "seed " << seed;
  }
}

TEST(DasTrain, OrthogonalAfterEveryEpoch) {
  const PlantedRun run;
  const DasTrainResult r = run.train(2, 7);
  ASSERT_FALSE(r.orthogonality.empty());
  EXPECT_EQ(static_cast<int>(r.orthogonality.size()), r.epochs);
  for (double o : r.orthogonality)
    EXPECT_LT(o, 1e-6);
  EXPECT_LT(orthogonality_error(r.rotation.rotation()), 1e-6);
}

TEST(DasTrain, ZeroEpochsReturnsInitialisation) {
  const PlantedRun run;
  DasTrainConfig cfg;
  cfg.max_epochs = 0;
  const DasTrainResult r = run.train(2, 9, cfg);
  EXPECT_EQ(r.epochs, 0);
  EXPECT_EQ(r.rotation.S.value, Matrix::Zero(4, 4));
  EXPECT_LT((r.rotation.rotation() - r.rotation.R0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(orthogonality_error(r.rotation.R0), 1e-12);
}

TEST(DasTrain, DeterministicPerSeed) {
  const PlantedRun run;
  const DasTrainResult a = run.train(1, 4), b = run.train(1, 4);
  EXPECT_EQ(a.rotation.rotation(), b.rotation.rotation());
  EXPECT_EQ(a.epochs, b.epochs);
}

TEST(DasTrain, FullRankSwapIsPerfectOnPlantedModel) {
  const PlantedRun run;
  DasTrainConfig cfg;
  cfg.max_epochs = 0;
  // k = d swaps the whole state, which always yields the source class here.
  EXPECT_DOUBLE_EQ(run.train(4, 1, cfg).fit_accuracy, 1.0);
}

TEST(DasTrain, RejectsMisalignedInputs) {
  const PlantedRun run;
  std::vector<int> short_targets(run.bank.counterfactual.begin(), run.bank.counterfactual.end() - 1);
  EXPECT_THROW(das_train(run.model, 0, 1, run.bank.base_x, run.base, run.source, short_targets, Rng(0)),
               std::invalid_argument);
  EXPECT_THROW(das_train(run.model, 0, 1, Matrix(0, 3), ActivationTrace{}, ActivationTrace{}, {}, Rng(0)),
               std::invalid_argument);
}

TEST(DasTrain, BitOutputsTrainOnGru) {
  const GruAdder g(4, 1);
  Rng rng(3);
  const auto pairs = testgen::random_adder_pairs(128, rng);
  std::vector<AdderInput> b, s;
  std::vector<int> targets;
  for (const auto &p : pairs) {
    b.push_back(p.base);
    s.push_back(p.source);
    targets.push_back(AdderCausal::swap(p.base, p.source, AdderCausal::kC1));
  }
  const Matrix bx = GruAdder::encode(b);
  DasTrainConfig cfg;
  cfg.max_epochs = 3;
  const DasTrainResult r = das_train(g, 0, 2, bx, g.trace(bx), g.trace(GruAdder::encode(s)), targets, Rng(5), cfg);
  EXPECT_LE(r.epochs, 3);
  for (double o : r.orthogonality)
    EXPECT_LT(o, 1e-6);
}

TEST(DasPlan, MatchesDasIntervene) {
  const PlantedRun run;
  Rng rng(2);
  DasRotation rot(0, 4, 2, rng);
  rot.S.value = gaussian_matrix(4, 4, rng);
  const Matrix want = run.model.resume(run.base, run.bank.base_x, {{0, [&](Matrix &live) {
                                                                     live = das_intervene(rot, live, run.source.states[0]);
                                                                   }}});
  EXPECT_LT((run.model.resume(run.base, run.bank.base_x, das_plan(rot, run.source)) - want).cwiseAbs().maxCoeff(),
            1e-14);
}
