// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "plot/banks.hpp"
#include "plot/interventions.hpp"

namespace {

void BM_ApplyHandleGru(benchmark::State &state) {
  const plot::GruAdder g(16, 0);
  const plot::AdderBanks banks = plot::gen_adder_banks(0);
  const plot::TracedBank bank = plot::TracedBank::make(g, plot::encode_bank(banks.test));
  plot::Handle h;
  h.sites = {plot::full_vector_site(1, 16)};
  h.weights.sites = {0};
  h.weights.weights = {1.0};
  for (auto _ : state)
    benchmark::DoNotOptimize(plot::apply_handle(g, h, bank.base, bank.bank.base_x, bank.source).data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bank.size()));
}
BENCHMARK(BM_ApplyHandleGru);

void BM_ApplyHandleMlp(benchmark::State &state) {
  const plot::HeqMlp m(0);
  const plot::HeqBanks banks = plot::gen_heq_banks(0);
  const plot::TracedBank bank = plot::TracedBank::make(m, plot::encode_bank(m, banks.cal));
  const auto k = static_cast<int>(state.range(0));
  plot::Handle h;
  for (int j = 0; j < k; ++j) {
    h.sites.push_back(plot::canonical_site(j % 3, 16, j));
    h.weights.sites.push_back(j);
    h.weights.weights.push_back(1.0 / k);
  }
  h.lambda = 4.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(plot::apply_handle(m, h, bank.base, bank.bank.base_x, bank.source).data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(bank.size()));
}
BENCHMARK(BM_ApplyHandleMlp)->Arg(1)->Arg(8)->Arg(16);

} // namespace
