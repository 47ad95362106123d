#include <benchmark/benchmark.h>

#include "atlas/indicators.hpp"
#include "atlas/rng.hpp"

namespace {

std::vector<double> probs(std::size_t n, std::uint64_t seed) {
    atlas::Rng rng(seed);
    std::vector<double> p(n);
    for (auto& x : p) x = rng.uniform();
    return p;
}

void BM_CountEstimate(benchmark::State& state) {
    const auto p = probs(static_cast<std::size_t>(state.range(0)), 1);
    std::vector<std::size_t> subset(p.size());
    for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
    for (auto _ : state) benchmark::DoNotOptimize(atlas::estimate_count(p, subset));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CountEstimate)->Arg(100)->Arg(1000)->Arg(11000);

void BM_AtLeastOne(benchmark::State& state) {
    const auto p = probs(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(atlas::at_least_one_probability(p));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AtLeastOne)->Arg(100)->Arg(11000);

// Sequential convolution pmf, the oracle the closed forms are checked against.
void BM_PoissonBinomialPmf(benchmark::State& state) {
    const auto p = probs(static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(atlas::brute_force_poisson_binomial(p));
}
BENCHMARK(BM_PoissonBinomialPmf)->DenseRange(5, 25, 10);

}  // namespace
