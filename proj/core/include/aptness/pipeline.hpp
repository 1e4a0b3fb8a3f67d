#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/gateway.hpp"
#include "aptness/model.hpp"
#include "aptness/prompt.hpp"
#include "aptness/retrieval.hpp"
#include "aptness/strategy.hpp"

namespace aptness::pipeline {

// What the retrieval query is built from. The draft is the default.
enum class QuerySource { kDraft, kHistory };

struct PipelineConfig {
  Mode mode = Mode::kAptness;
  std::size_t k = 2;
  Scheme scheme = Scheme::kExTES;
  Sampling sampling;
  std::size_t max_history_chars = 8000;
  QuerySource query_source = QuerySource::kDraft;

  // Throws kConfig.
  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

// Everything a run may use. Only `chat` and `templates` are needed in GEN.
struct PipelineDeps {
  llm::ChatProvider* chat = nullptr;
  retrieval::Retriever* retriever = nullptr;
  const strategy::StrategyCatalog* catalog = nullptr;
  strategy::Predictor* predictor = nullptr;
  const prompt::PromptTemplates* templates = nullptr;
};

// Optional window into a run, for tests and debugging.
struct PipelineTrace {
  std::string draft_prompt;
  std::string final_prompt;
  std::vector<strategy::StrategyPrediction> predictions;
  std::string fallback_reason;
};

// G_1: one chat call with the plain continuation prompt.
DraftResponse generate_draft(const Dialogue& history, const PipelineConfig& config,
                             llm::ChatProvider& chat, const prompt::PromptTemplates& templates,
                             std::string* prompt_out = nullptr);

// Drops the oldest Speaker+Listener exchanges until the rendered history
// fits `max_chars`. The final query utterance is always kept.
Dialogue truncate_history(const Dialogue& history, std::size_t max_chars);

// Draft, retrieve, predict strategies, final call. Provider and retrieval
// errors propagate; a failed strategy prediction degrades to retrieval-only
// framing with a provenance flag.
FinalResponse run_pipeline(const Dialogue& history, const PipelineConfig& config,
                           const PipelineDeps& deps, PipelineTrace* trace = nullptr);

}  // namespace aptness::pipeline
