// SPDX-License-Identifier: Apache-2.0
#include "plot/banks.hpp"

#include <array>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace plot {

namespace {

using HeqKey = std::array<int, 8>;

HeqKey key_of(const HeqInput &b, const HeqInput &s) {
  return {b.w, b.x, b.y, b.z, s.w, s.x, s.y, s.z};
}

template <typename Pred>
HeqPair draw_heq(Rng &rng, const Pred &accept, int max_attempts, std::set<HeqKey> &seen) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const HeqInput base = sample_heq_input(rng);
    const HeqInput source = sample_heq_input(rng);
    HeqPair p = HeqPair::make(base, source);
    if (!accept(p))
      continue;
    if (!seen.insert(key_of(base, source)).second)
      continue;
    return p;
  }
  throw std::runtime_error("gen_heq_banks: rejection sampling exceeded its attempt budget");
}

bool only(const HeqPair &p, int var) { return p.changes[static_cast<std::size_t>(var)] && !p.changes[static_cast<std::size_t>(1 - var)]; }

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> out(count);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

} // namespace

HeqBanks gen_heq_banks(std::uint64_t seed, const HeqBankConfig &config) {
  HeqBanks banks;
  banks.policy = "heq-mixed";
  banks.seed = seed;
  Rng root = Rng(seed).split("heq/banks");
  std::set<HeqKey> seen;

  Rng fit_rng = root.split("fit");
  for (int t = 0; t < config.fit; ++t) {
    const double u = fit_rng.uniform();
    if (u < config.p_wx)
      banks.fit.push_back(draw_heq(fit_rng, [](const HeqPair &p) { return only(p, HeqCausal::kWX); },
                                   config.max_attempts, seen));
    else if (u < config.p_wx + config.p_yz)
      banks.fit.push_back(draw_heq(fit_rng, [](const HeqPair &p) { return only(p, HeqCausal::kYZ); },
                                   config.max_attempts, seen));
    else
      banks.fit.push_back(draw_heq(fit_rng, [](const HeqPair &p) { return !p.changes[0] && !p.changes[1]; },
                                   config.max_attempts, seen));
  }

  Rng cal_rng = root.split("cal");
  for (int var = 0; var < HeqCausal::kNumVars; ++var) {
    banks.cal_subsets.push_back(iota_range(banks.cal.size(), static_cast<std::size_t>(config.cal_per_var)));
    for (int t = 0; t < config.cal_per_var; ++t)
      banks.cal.push_back(draw_heq(cal_rng, [var](const HeqPair &p) { return only(p, var); },
                                   config.max_attempts, seen));
  }

  Rng test_rng = root.split("test");
  const auto n = static_cast<std::size_t>(config.test_per_bank);
  for (int var = 0; var < HeqCausal::kNumVars; ++var) {
    const auto v = static_cast<std::size_t>(var);
    Partition part;
    part.variable = var;
    part.sensitive = iota_range(banks.test.size(), n);
    for (std::size_t t = 0; t < n; ++t)
      banks.test.push_back(draw_heq(test_rng, [v](const HeqPair &p) { return bool(p.changes[v]); },
                                    config.max_attempts, seen));
    part.invariant = iota_range(banks.test.size(), n);
    for (std::size_t t = 0; t < n; ++t)
      banks.test.push_back(draw_heq(test_rng, [v](const HeqPair &p) { return !p.changes[v]; },
                                    config.max_attempts, seen));
    banks.test_partitions.push_back(std::move(part));
  }
  return banks;
}

namespace {

AdderInput flip_bit(AdderInput in, int bit) {
  if (bit < 4)
    in.a[static_cast<std::size_t>(bit)] ^= 1;
  else
    in.b[static_cast<std::size_t>(bit - 4)] ^= 1;
  return in;
}

int hamming(const AdderInput &x, const AdderInput &y) {
  int h = 0;
  for (std::size_t i = 0; i < 4; ++i)
    h += (x.a[i] != y.a[i]) + (x.b[i] != y.b[i]);
  return h;
}

std::vector<AdderPair> sources_for(const AdderInput &base, const std::vector<AdderInput> &all,
                                   const AdderBankConfig &config, Rng &rng, int &deficit) {
  std::vector<AdderPair> out;
  for (int bit = 0; bit < 8; ++bit)
    out.push_back(AdderPair::make(base, flip_bit(base, bit)));
  std::vector<AdderInput> candidates;
  for (const AdderInput &in : all)
    if (!(in == base))
      candidates.push_back(in);
  for (int var = 0; var < AdderCausal::kNumVars; ++var) {
    rng.shuffle(candidates.begin(), candidates.end());
    int found = 0;
    const int want = config.targeted[static_cast<std::size_t>(var)];
    for (const AdderInput &c : candidates) {
      if (found == want)
        break;
      if (AdderCausal::changes(base, c, var)) {
        out.push_back(AdderPair::make(base, c));
        ++found;
      }
    }
    deficit += want - found;
  }
  return out;
}

int sources_per_base(const AdderBankConfig &config) {
  return 8 + std::accumulate(config.targeted.begin(), config.targeted.end(), 0);
}

} // namespace

AdderBanks gen_adder_banks(std::uint64_t seed, const AdderBankConfig &config) {
  if (config.fit_bases + config.cal_bases + config.test_bases > 256)
    throw std::invalid_argument("gen_adder_banks: more bases requested than exist");
  AdderBanks banks;
  banks.policy = "adder-flip-carry";
  banks.seed = seed;
  Rng root = Rng(seed).split("adder/banks");
  const std::vector<AdderInput> all = all_adder_inputs();
  std::vector<AdderInput> bases = all;
  Rng split_rng = root.split("split");
  split_rng.shuffle(bases.begin(), bases.end());

  Rng source_rng = root.split("sources");
  auto fill = [&](std::vector<AdderPair> &dst, std::size_t begin, int count) {
    for (int i = 0; i < count; ++i) {
      auto pairs = sources_for(bases[begin + static_cast<std::size_t>(i)], all, config, source_rng,
                               banks.deficit);
      dst.insert(dst.end(), pairs.begin(), pairs.end());
    }
  };
  fill(banks.fit, 0, config.fit_bases);
  fill(banks.cal, static_cast<std::size_t>(config.fit_bases), config.cal_bases);
  fill(banks.test, static_cast<std::size_t>(config.fit_bases + config.cal_bases), config.test_bases);

  for (int var = 0; var < AdderCausal::kNumVars; ++var) {
    banks.cal_subsets.push_back(iota_range(0, banks.cal.size()));
    Partition part;
    part.variable = var;
    for (std::size_t t = 0; t < banks.test.size(); ++t)
      (banks.test[t].changes[static_cast<std::size_t>(var)] ? part.sensitive : part.invariant).push_back(t);
    banks.test_partitions.push_back(std::move(part));
  }
  return banks;
}

namespace {

template <typename Causal>
void check_flags(const std::vector<CounterfactualPair<Causal>> &pairs, const std::string &split,
                 BankReport &report) {
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    const auto &p = pairs[t];
    if (p.changes.size() != static_cast<std::size_t>(Causal::kNumVars)) {
      report.fail(split + "[" + std::to_string(t) + "]: wrong number of change flags");
      continue;
    }
    for (int v = 0; v < Causal::kNumVars; ++v)
      if (p.changes[static_cast<std::size_t>(v)] != Causal::changes(p.base, p.source, v))
        report.fail(split + "[" + std::to_string(t) + "]: flag for " + std::string(Causal::var_name(v)) +
                    " does not match the causal model");
  }
}

template <typename Causal>
void check_partitions(const BankSplit<Causal> &banks, BankReport &report) {
  for (const Partition &part : banks.test_partitions) {
    const auto v = static_cast<std::size_t>(part.variable);
    const std::string name(Causal::var_name(part.variable));
    std::set<std::size_t> used;
    for (std::size_t t : part.sensitive) {
      if (t >= banks.test.size() || !banks.test[t].changes[v])
        report.fail("test partition " + name + ": pair " + std::to_string(t) + " is not sensitive");
      if (!used.insert(t).second)
        report.fail("test partition " + name + ": pair " + std::to_string(t) + " listed twice");
    }
    for (std::size_t t : part.invariant) {
      if (t >= banks.test.size() || banks.test[t].changes[v])
        report.fail("test partition " + name + ": pair " + std::to_string(t) + " is not invariant");
      if (!used.insert(t).second)
        report.fail("test partition " + name + ": pair " + std::to_string(t) + " listed twice");
    }
  }
}

} // namespace

BankReport verify_bank(const HeqBanks &banks, const HeqBankConfig &config) {
  BankReport report;
  check_flags(banks.fit, "fit", report);
  check_flags(banks.cal, "cal", report);
  check_flags(banks.test, "test", report);
  if (!report.ok)
    return report;

  if (banks.fit.size() != static_cast<std::size_t>(config.fit))
    report.fail("fit bank has " + std::to_string(banks.fit.size()) + " pairs");
  if (banks.cal.size() != 2 * static_cast<std::size_t>(config.cal_per_var))
    report.fail("cal bank has " + std::to_string(banks.cal.size()) + " pairs");
  if (banks.test.size() != 4 * static_cast<std::size_t>(config.test_per_bank))
    report.fail("test banks hold " + std::to_string(banks.test.size()) + " pairs");

  for (std::size_t t = 0; t < banks.fit.size(); ++t)
    if (banks.fit[t].changes[0] && banks.fit[t].changes[1])
      report.fail("fit[" + std::to_string(t) + "]: both variables change");

  std::array<std::size_t, 2> only_count{};
  for (std::size_t t = 0; t < banks.cal.size(); ++t) {
    const auto &c = banks.cal[t].changes;
    if (c[0] == c[1])
      report.fail("cal[" + std::to_string(t) + "]: not sensitive in exactly one variable");
    else
      ++only_count[c[0] ? 0 : 1];
  }
  for (std::size_t v = 0; v < 2; ++v)
    if (only_count[v] != static_cast<std::size_t>(config.cal_per_var))
      report.fail("cal bank: " + std::to_string(only_count[v]) + " pairs only sensitive in " +
                  std::string(HeqCausal::var_name(static_cast<int>(v))));
  if (banks.cal_subsets.size() != 2) {
    report.fail("cal subsets missing");
  } else {
    for (std::size_t v = 0; v < 2; ++v)
      for (std::size_t t : banks.cal_subsets[v])
        if (t >= banks.cal.size() || !only(banks.cal[t], static_cast<int>(v)))
          report.fail("cal subset " + std::string(HeqCausal::var_name(static_cast<int>(v))) + ": pair " +
                      std::to_string(t) + " is not only sensitive in that variable");
  }

  if (banks.test_partitions.size() != 2)
    report.fail("expected two test partitions");
  for (const Partition &p : banks.test_partitions)
    if (p.sensitive.size() != static_cast<std::size_t>(config.test_per_bank) ||
        p.invariant.size() != static_cast<std::size_t>(config.test_per_bank))
      report.fail("test partition " + std::string(HeqCausal::var_name(p.variable)) + " has wrong size");
  check_partitions(banks, report);

  std::set<HeqKey> seen;
  for (const auto *split : {&banks.fit, &banks.cal, &banks.test})
    for (const HeqPair &p : *split)
      if (!seen.insert(key_of(p.base, p.source)).second)
        report.fail("pair repeated across banks");
  return report;
}

BankReport verify_bank(const AdderBanks &banks, const AdderBankConfig &config) {
  BankReport report;
  check_flags(banks.fit, "fit", report);
  check_flags(banks.cal, "cal", report);
  check_flags(banks.test, "test", report);
  if (!report.ok)
    return report;

  const auto per_base = static_cast<std::size_t>(sources_per_base(config));
  std::set<int> bases_seen;
  auto check_split = [&](const std::vector<AdderPair> &pairs, int n_bases, const std::string &name) {
    if (pairs.size() != per_base * static_cast<std::size_t>(n_bases)) {
      report.fail(name + " bank has " + std::to_string(pairs.size()) + " pairs");
      return;
    }
    for (std::size_t b = 0; b < static_cast<std::size_t>(n_bases); ++b) {
      const AdderInput &base = pairs[b * per_base].base;
      if (!bases_seen.insert(base.index()).second)
        report.fail(name + ": base " + std::to_string(base.index()) + " appears in more than one group");
      std::size_t t = b * per_base;
      for (int bit = 0; bit < 8; ++bit, ++t)
        if (!(pairs[t].base == base) || hamming(pairs[t].base, pairs[t].source) != 1 ||
            !(pairs[t].source == flip_bit(base, bit)))
          report.fail(name + "[" + std::to_string(t) + "]: expected flip of input bit " + std::to_string(bit));
      for (int var = 0; var < AdderCausal::kNumVars; ++var)
        for (int i = 0; i < config.targeted[static_cast<std::size_t>(var)]; ++i, ++t)
          if (!(pairs[t].base == base) || !pairs[t].changes[static_cast<std::size_t>(var)])
            report.fail(name + "[" + std::to_string(t) + "]: source does not change " +
                        std::string(AdderCausal::var_name(var)));
    }
  };
  if (banks.deficit != 0)
    report.fail("adder banks carry a deficit of " + std::to_string(banks.deficit) + " targeted sources");
  check_split(banks.fit, config.fit_bases, "fit");
  check_split(banks.cal, config.cal_bases, "cal");
  check_split(banks.test, config.test_bases, "test");

  if (banks.test_partitions.size() != static_cast<std::size_t>(AdderCausal::kNumVars))
    report.fail("expected one test partition per carry");
  for (const Partition &p : banks.test_partitions)
    if (p.sensitive.size() + p.invariant.size() != banks.test.size())
      report.fail("test partition " + std::string(AdderCausal::var_name(p.variable)) + " does not cover the test bank");
  check_partitions(banks, report);
  return report;
}

namespace {

nlohmann::json input_json(const HeqInput &in) { return {in.w, in.x, in.y, in.z}; }
nlohmann::json input_json(const AdderInput &in) { return {in.a_value(), in.b_value()}; }

HeqInput input_from(const nlohmann::json &j, const HeqInput *) {
  HeqInput in{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
  HeqCausal::validate(in);
  return in;
}
AdderInput input_from(const nlohmann::json &j, const AdderInput *) {
  return AdderInput::from_ints(j.at(0).get<int>(), j.at(1).get<int>());
}

template <typename Causal> nlohmann::json pairs_json(const std::vector<CounterfactualPair<Causal>> &pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto &p : pairs) {
    std::vector<int> flags(p.changes.begin(), p.changes.end());
    arr.push_back({{"base", input_json(p.base)}, {"source", input_json(p.source)}, {"changes", flags}});
  }
  return arr;
}

template <typename Causal> std::vector<CounterfactualPair<Causal>> pairs_from(const nlohmann::json &arr) {
  using Input = typename Causal::Input;
  std::vector<CounterfactualPair<Causal>> out;
  for (const auto &e : arr) {
    CounterfactualPair<Causal> p;
    p.base = input_from(e.at("base"), static_cast<const Input *>(nullptr));
    p.source = input_from(e.at("source"), static_cast<const Input *>(nullptr));
    for (int f : e.at("changes").get<std::vector<int>>())
      p.changes.push_back(f != 0);
    out.push_back(std::move(p));
  }
  return out;
}

template <typename Causal> nlohmann::json banks_json(const BankSplit<Causal> &b) {
  nlohmann::json parts = nlohmann::json::array();
  for (const Partition &p : b.test_partitions)
    parts.push_back({{"variable", std::string(Causal::var_name(p.variable))},
                     {"sensitive", p.sensitive},
                     {"invariant", p.invariant}});
  return {{"policy", b.policy},       {"seed", b.seed},
          {"deficit", b.deficit},     {"fit", pairs_json(b.fit)},
          {"cal", pairs_json(b.cal)}, {"test", pairs_json(b.test)},
          {"cal_subsets", b.cal_subsets}, {"test_partitions", parts}};
}

template <typename Causal> BankSplit<Causal> banks_from(const nlohmann::json &j) {
  BankSplit<Causal> b;
  b.policy = j.at("policy").get<std::string>();
  b.seed = j.at("seed").get<std::uint64_t>();
  b.deficit = j.at("deficit").get<int>();
  b.fit = pairs_from<Causal>(j.at("fit"));
  b.cal = pairs_from<Causal>(j.at("cal"));
  b.test = pairs_from<Causal>(j.at("test"));
  b.cal_subsets = j.at("cal_subsets").get<std::vector<std::vector<std::size_t>>>();
  for (const auto &p : j.at("test_partitions")) {
    Partition part;
    part.variable = Causal::var_index(p.at("variable").get<std::string>());
    part.sensitive = p.at("sensitive").get<std::vector<std::size_t>>();
    part.invariant = p.at("invariant").get<std::vector<std::size_t>>();
    b.test_partitions.push_back(std::move(part));
  }
  return b;
}

} // namespace

nlohmann::json to_json(const HeqBanks &banks) { return banks_json(banks); }
nlohmann::json to_json(const AdderBanks &banks) { return banks_json(banks); }
HeqBanks heq_banks_from_json(const nlohmann::json &j) { return banks_from<HeqCausal>(j); }
AdderBanks adder_banks_from_json(const nlohmann::json &j) { return banks_from<AdderCausal>(j); }

EncodedBank EncodedBank::subset(const std::vector<std::size_t> &idx) const {
  EncodedBank out;
  std::vector<Index> rows(idx.begin(), idx.end());
  for (std::size_t t : idx)
    if (t >= size())
      throw std::out_of_range("EncodedBank::subset: index out of range");
  out.base_x = base_x(rows, Eigen::all);
  out.source_x = source_x(rows, Eigen::all);
  out.counterfactual.resize(counterfactual.size());
  out.changes.resize(changes.size());
  for (std::size_t t : idx) {
    out.factual.push_back(factual[t]);
    for (std::size_t v = 0; v < counterfactual.size(); ++v) {
      out.counterfactual[v].push_back(counterfactual[v][t]);
      out.changes[v].push_back(changes[v][t]);
    }
  }
  return out;
}

namespace {

template <typename Causal> void fill_labels(EncodedBank &out, const std::vector<CounterfactualPair<Causal>> &pairs) {
  out.counterfactual.assign(Causal::kNumVars, {});
  out.changes.assign(Causal::kNumVars, {});
  for (const auto &p : pairs) {
    out.factual.push_back(Causal::output(p.base));
    for (int v = 0; v < Causal::kNumVars; ++v) {
      out.counterfactual[static_cast<std::size_t>(v)].push_back(Causal::swap(p.base, p.source, v));
      out.changes[static_cast<std::size_t>(v)].push_back(Causal::changes(p.base, p.source, v));
    }
  }
}

} // namespace

EncodedBank encode_bank(const HeqMlp &model, const std::vector<HeqPair> &pairs) {
  EncodedBank out;
  std::vector<HeqInput> bases, sources;
  for (const HeqPair &p : pairs) {
    bases.push_back(p.base);
    sources.push_back(p.source);
  }
  out.base_x = model.encode(bases);
  out.source_x = model.encode(sources);
  fill_labels(out, pairs);
  return out;
}

EncodedBank encode_bank(const std::vector<AdderPair> &pairs) {
  EncodedBank out;
  std::vector<AdderInput> bases, sources;
  for (const AdderPair &p : pairs) {
    bases.push_back(p.base);
    sources.push_back(p.source);
  }
  out.base_x = GruAdder::encode(bases);
  out.source_x = GruAdder::encode(sources);
  fill_labels(out, pairs);
  return out;
}

TracedBank TracedBank::make(const NeuralModel &model, EncodedBank bank) {
  TracedBank tb;
  tb.base = model.trace(bank.base_x);
  tb.source = model.trace(bank.source_x);
  tb.bank = std::move(bank);
  return tb;
}

TracedBank TracedBank::subset(const std::vector<std::size_t> &idx) const {
  TracedBank out;
  out.bank = bank.subset(idx);
  const std::vector<Index> rows(idx.begin(), idx.end());
  out.base = base.rows(rows);
  out.source = source.rows(rows);
  return out;
}

} // namespace plot
