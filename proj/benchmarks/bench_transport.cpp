// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "plot/transport.hpp"

namespace {

plot::DiscreteMeasure measure(plot::Index n, plot::Index dim, plot::Rng &rng) {
  return plot::DiscreteMeasure::uniform(plot::gaussian_matrix(n, dim, rng));
}

void BM_SinkhornEot(benchmark::State &state) {
  plot::Rng rng(1);
  const auto n = static_cast<plot::Index>(state.range(0));
  const auto mu = measure(2, 64, rng);
  const auto nu = measure(n, 64, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(plot::sinkhorn_eot(mu, nu, 4.0).pi.data());
}
BENCHMARK(BM_SinkhornEot)->Arg(12)->Arg(48)->Arg(256);

void BM_SinkhornUot(benchmark::State &state) {
  plot::Rng rng(2);
  const auto n = static_cast<plot::Index>(state.range(0));
  const auto mu = measure(4, 32, rng);
  const auto nu = measure(n, 32, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(plot::sinkhorn_uot_one_sided(mu, nu, 1.0, 10.0).pi.data());
}
BENCHMARK(BM_SinkhornUot)->Arg(48)->Arg(256);

void BM_TopK(benchmark::State &state) {
  plot::Rng rng(3);
  const plot::RowVector row = plot::gaussian_matrix(1, 48, rng).cwiseAbs();
  for (auto _ : state)
    benchmark::DoNotOptimize(plot::topk_renormalize(row, 0, 20).weights.data());
}
BENCHMARK(BM_TopK);

} // namespace
