#include <random>

#include <benchmark/benchmark.h>

#include "aptness/eval.hpp"
#include "aptness/prompt.hpp"
#include "aptness/strategy.hpp"

namespace {

using namespace aptness;

void BM_DedupOrdered(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::vector<strategy::StrategyPrediction> preds(static_cast<std::size_t>(state.range(0)));
  for (auto& p : preds) {
    for (int i = 0; i < 3; ++i) p.strategies.push_back({"S" + std::to_string(rng() % 18), Scheme::kESConv});
  }
  for (auto _ : state) benchmark::DoNotOptimize(strategy::dedup_ordered(preds));
}
BENCHMARK(BM_DedupOrdered)->Arg(3)->Arg(21);

void BM_AssemblePrompt(benchmark::State& state) {
  const auto templates = prompt::PromptTemplates::load();
  std::vector<std::pair<Role, std::string>> turns;
  for (int i = 0; i < 23; ++i) {
    turns.emplace_back(i % 2 ? Role::kListener : Role::kSpeaker,
                       "utterance number " + std::to_string(i) + " with some ordinary words");
  }
  const Dialogue history("h", turns);
  std::vector<RetrievedExample> retrieved;
  for (int i = 0; i < state.range(0); ++i) {
    retrieved.push_back({"r", "a retrieved reply that mentions [Response 3] once", history, 0.5, i + 1});
  }
  const std::vector<StrategyUse> strategies(3, {"Question", "Ask open questions."});
  const DraftResponse draft{"draft text", "m", {}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(prompt::assemble_prompt(history, draft, retrieved, strategies, templates));
  }
}
BENCHMARK(BM_AssemblePrompt)->Arg(2)->Arg(20);

void BM_ParseJudgeOutput(benchmark::State& state) {
  const std::string raw =
      "Empathy: 6\nCoherence: 7\nInformativity: 4.5\nIdentification: 5\nComforting: 6\nSuggestion: 3";
  for (auto _ : state) benchmark::DoNotOptimize(eval::parse_judge_output(raw));
}
BENCHMARK(BM_ParseJudgeOutput);

void BM_Aggregate(benchmark::State& state) {
  std::vector<eval::TurnScore> scores;
  for (int d = 0; d < 30; ++d) {
    for (std::size_t t = 1; t <= 4; ++t) {
      eval::TurnScore s;
      s.dialogue_id = "d" + std::to_string(d);
      s.turn = t;
      s.metrics.values.fill(5.0);
      scores.push_back(s);
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::aggregate(scores));
}
BENCHMARK(BM_Aggregate);

}  // namespace

BENCHMARK_MAIN();
