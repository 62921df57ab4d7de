// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "generators.hpp"
#include "plot/banks.hpp"

using namespace plot;

namespace {

const HeqBanks &heq_banks() {
  static const HeqBanks banks = gen_heq_banks(3);
  return banks;
}

const AdderBanks &adder_banks() {
  static const AdderBanks banks = gen_adder_banks(3);
  return banks;
}

bool mentions(const BankReport &r, const std::string &what) {
  for (const std::string &v : r.violations)
    if (v.find(what) != std::string::npos)
      return true;
  return false;
}

int hamming(const AdderInput &x, const AdderInput &y) {
  int h = 0;
  for (std::size_t i = 0; i < 4; ++i)
    h += (x.a[i] != y.a[i]) + (x.b[i] != y.b[i]);
  return h;
}

} // namespace

TEST(HeqBanks, Sizes) {
  const HeqBanks &b = heq_banks();
  EXPECT_EQ(b.fit.size(), 1000u);
  EXPECT_EQ(b.cal.size(), 1000u);
  EXPECT_EQ(b.test.size(), 4000u);
}

TEST(HeqBanks, CalibrationIsHalfWxOnlyHalfYzOnly) {
  const HeqBanks &b = heq_banks();
  std::size_t wx = 0, yz = 0;
  for (const HeqPair &p : b.cal) {
    ASSERT_NE(p.changes[0], p.changes[1]);
    (p.changes[0] ? wx : yz) += 1;
  }
  EXPECT_EQ(wx, 500u);
  EXPECT_EQ(yz, 500u);
  for (std::size_t t : b.cal_subsets[0])
    EXPECT_TRUE(b.cal[t].changes[0] && !b.cal[t].changes[1]);
  for (std::size_t t : b.cal_subsets[1])
    EXPECT_TRUE(b.cal[t].changes[1] && !b.cal[t].changes[0]);
}

TEST(HeqBanks, TestPartitionsRespectFlags) {
  const HeqBanks &b = heq_banks();
  ASSERT_EQ(b.test_partitions.size(), 2u);
  for (const Partition &p : b.test_partitions) {
    const auto v = static_cast<std::size_t>(p.variable);
    EXPECT_EQ(p.sensitive.size(), 1000u);
    EXPECT_EQ(p.invariant.size(), 1000u);
    for (std::size_t t : p.sensitive)
      EXPECT_TRUE(b.test[t].changes[v]);
    for (std::size_t t : p.invariant)
      EXPECT_FALSE(b.test[t].changes[v]);
  }
}

TEST(HeqBanks, FitMixIsRoughlyHalfSensitive) {
  const HeqBanks &b = heq_banks();
  std::size_t sensitive = 0;
  for (const HeqPair &p : b.fit)
    sensitive += (p.changes[0] || p.changes[1]) ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(sensitive) / 1000.0, 0.5, 0.06);
}

TEST(HeqBanks, NoPairRepeats) {
  const HeqBanks &b = heq_banks();
  std::set<std::array<int, 8>> seen;
  for (const auto *split : {&b.fit, &b.cal, &b.test})
    for (const HeqPair &p : *split)
      ASSERT_TRUE(seen.insert({p.base.w, p.base.x, p.base.y, p.base.z, p.source.w, p.source.x, p.source.y,
                               p.source.z})
                      .second);
}

TEST(HeqBanks, VerifyPassesAndCatchesTampering) {
  EXPECT_TRUE(verify_bank(heq_banks()).ok);
  HeqBanks bad = heq_banks();
  bad.fit[3].changes[0] = !bad.fit[3].changes[0];
  const BankReport r = verify_bank(bad);
  EXPECT_FALSE(r.ok);
  EXPECT_TRUE(mentions(r, "[3]"));
}

TEST(HeqBanks, DeterministicAndJsonRoundTrip) {
  const HeqBanks again = gen_heq_banks(3);
  EXPECT_EQ(to_json(again), to_json(heq_banks()));
  const nlohmann::json j = to_json(heq_banks());
  const HeqBanks back = heq_banks_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.cal_subsets, heq_banks().cal_subsets);
  EXPECT_TRUE(verify_bank(back).ok);
  EXPECT_NE(to_json(gen_heq_banks(4)), j);
}

TEST(AdderBanks, Sizes) {
  const AdderBanks &b = adder_banks();
  EXPECT_EQ(b.fit.size(), 3328u);
  EXPECT_EQ(b.cal.size(), 1664u);
  EXPECT_EQ(b.test.size(), 1664u);
  EXPECT_EQ(b.deficit, 0);
}

TEST(AdderBanks, TwentySixSourcesPerBaseAndFlipsFirst) {
  const AdderBanks &b = adder_banks();
  for (const auto *split : {&b.fit, &b.cal, &b.test}) {
    ASSERT_EQ(split->size() % 26, 0u);
    for (std::size_t start = 0; start < split->size(); start += 26) {
      const AdderInput &base = (*split)[start].base;
      for (std::size_t t = start; t < start + 26; ++t)
        ASSERT_EQ((*split)[t].base, base);
      for (std::size_t t = start; t < start + 8; ++t)
        ASSERT_EQ(hamming(base, (*split)[t].source), 1);
    }
  }
}

TEST(AdderBanks, CarryTargetedSourcesChangeTheirCarry) {
  const AdderBanks &b = adder_banks();
  const int quota[] = {3, 5, 7, 3};
  for (std::size_t start = 0; start < b.fit.size(); start += 26) {
    std::size_t t = start + 8;
    for (int var = 0; var < 4; ++var)
      for (int i = 0; i < quota[var]; ++i, ++t)
        ASSERT_TRUE(AdderCausal::changes(b.fit[t].base, b.fit[t].source, var));
  }
}

TEST(AdderBanks, BaseGroupsAreDisjoint) {
  const AdderBanks &b = adder_banks();
  auto bases = [](const std::vector<AdderPair> &pairs) {
    std::set<int> out;
    for (const AdderPair &p : pairs)
      out.insert(p.base.index());
    return out;
  };
  const std::set<int> f = bases(b.fit), c = bases(b.cal), t = bases(b.test);
  EXPECT_EQ(f.size(), 128u);
  EXPECT_EQ(c.size(), 64u);
  EXPECT_EQ(t.size(), 64u);
  std::set<int> all(f);
  all.insert(c.begin(), c.end());
  all.insert(t.begin(), t.end());
  EXPECT_EQ(all.size(), 256u);
}

TEST(AdderBanks, PartitionsSumTo1664PerCarry) {
  const AdderBanks &b = adder_banks();
  ASSERT_EQ(b.test_partitions.size(), 4u);
  for (const Partition &p : b.test_partitions) {
    EXPECT_EQ(p.sensitive.size() + p.invariant.size(), 1664u);
    std::vector<int> seen(1664, 0);
    for (std::size_t t : p.sensitive)
      ++seen[t];
    for (std::size_t t : p.invariant)
      ++seen[t];
    EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), 1664);
  }
}

TEST(AdderBanks, VerifyPassesAndCatchesTampering) {
  EXPECT_TRUE(verify_bank(adder_banks()).ok);
  AdderBanks bad = adder_banks();
  bad.test[10].changes[2] = !bad.test[10].changes[2];
  const BankReport r = verify_bank(bad);
  EXPECT_FALSE(r.ok);
  EXPECT_TRUE(mentions(r, "[10]"));
}

TEST(AdderBanks, JsonRoundTrip) {
  const nlohmann::json j = to_json(adder_banks());
  const AdderBanks back = adder_banks_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_TRUE(verify_bank(back).ok);
}

TEST(BanksProperty, VerifyPassesAcrossSeeds) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    EXPECT_TRUE(verify_bank(gen_adder_banks(seed)).ok) << seed;
    HeqBankConfig small;
    small.fit = 100;
    small.cal_per_var = 50;
    small.test_per_bank = 100;
    EXPECT_TRUE(verify_bank(gen_heq_banks(seed, small), small).ok) << seed;
  }
}

TEST(EncodedBank, LabelsMatchCausalModel) {
  const HeqMlp m(0);
  Rng rng(1);
  const auto pairs = testgen::random_heq_pairs(50, rng);
  const EncodedBank e = encode_bank(m, pairs);
  ASSERT_EQ(e.size(), 50u);
  EXPECT_EQ(e.num_vars(), 2);
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    EXPECT_EQ(e.factual[t], HeqCausal::output(pairs[t].base));
    for (int v = 0; v < 2; ++v)
      EXPECT_EQ(e.counterfactual[static_cast<std::size_t>(v)][t], HeqCausal::swap(pairs[t].base, pairs[t].source, v));
  }
  const std::vector<HeqInput> one{pairs[7].source};
  EXPECT_EQ(e.source_x.row(7), m.encode(one).row(0));

  const auto adder_pairs = testgen::random_adder_pairs(40, rng);
  const EncodedBank a = encode_bank(adder_pairs);
  EXPECT_EQ(a.num_vars(), 4);
  for (std::size_t t = 0; t < adder_pairs.size(); ++t)
    EXPECT_EQ(a.counterfactual[2][t], AdderCausal::swap(adder_pairs[t].base, adder_pairs[t].source, 2));
}

TEST(EncodedBank, SubsetKeepsAlignment) {
  Rng rng(2);
  const auto pairs = testgen::random_adder_pairs(20, rng);
  const GruAdder g(4, 0);
  const TracedBank tb = TracedBank::make(g, encode_bank(pairs));
  const std::vector<std::size_t> idx{3, 17, 5};
  const TracedBank sub = tb.subset(idx);
  ASSERT_EQ(sub.size(), 3u);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_EQ(sub.bank.factual[i], tb.bank.factual[idx[i]]);
    EXPECT_EQ(sub.bank.base_x.row(static_cast<Index>(i)), tb.bank.base_x.row(static_cast<Index>(idx[i])));
    EXPECT_EQ(sub.source.states[2].row(static_cast<Index>(i)), tb.source.states[2].row(static_cast<Index>(idx[i])));
  }
}
