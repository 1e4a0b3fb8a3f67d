#include <random>

#include <benchmark/benchmark.h>

#include "aptness/retrieval.hpp"

namespace {

using aptness::retrieval::VectorIndex;

std::vector<std::vector<float>> unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  std::vector<std::vector<float>> out(n, std::vector<float>(dim));
  for (auto& v : out) {
    float norm = 0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm);
  }
  return out;
}

VectorIndex make_index(std::size_t n, std::size_t dim) {
  const auto vectors = unit_vectors(n, dim, 1);
  const aptness::Dialogue history("h", {{aptness::Role::kSpeaker, "s"}});
  std::vector<VectorIndex::Entry> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) entries.push_back({std::to_string(i), "r", history});
  return VectorIndex::from_vectors("bench", std::move(entries), vectors);
}

// Full database scale: ~20k responses.
void BM_QueryTopK(benchmark::State& state) {
  const auto index = make_index(static_cast<std::size_t>(state.range(0)), 768);
  const auto queries = unit_vectors(64, 768, 2);
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.query_vector(queries[q++ % queries.size()],
                                                static_cast<std::size_t>(state.range(1))));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QueryTopK)->Args({1000, 2})->Args({20000, 2})->Args({20000, 20})
    ->Unit(benchmark::kMillisecond);

void BM_CosineSimilarity(benchmark::State& state) {
  const auto v = unit_vectors(2, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(aptness::retrieval::cosine_similarity(v[0], v[1]));
}
BENCHMARK(BM_CosineSimilarity)->Arg(64)->Arg(768)->Arg(1536);

}  // namespace
