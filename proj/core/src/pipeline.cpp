#include "aptness/pipeline.hpp"

#include <future>

#include <spdlog/spdlog.h>

#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness::pipeline {

namespace {

std::string_view to_string(QuerySource q) { return q == QuerySource::kDraft ? "draft" : "history"; }

QuerySource parse_query_source(std::string_view s) {
  const auto v = to_lower(trim(s));
  if (v == "draft") return QuerySource::kDraft;
  if (v == "history") return QuerySource::kHistory;
  throw Error(ErrorKind::kConfig, "unknown query source: " + std::string(s));
}

std::string chat_text(llm::ChatProvider& chat, const llm::ChatRequest& req, const char* stage) {
  auto result = chat.chat(req);
  auto text = std::string(trim(result.text));
  if (text.empty()) {
    throw Error(ErrorKind::kPipeline, std::string(stage) + " call returned empty text");
  }
  return text;
}

std::vector<strategy::StrategyPrediction> predict_all(const std::vector<Dialogue>& histories,
                                                      const strategy::StrategyCatalog& catalog,
                                                      strategy::Predictor& predictor) {
  std::vector<std::future<strategy::StrategyPrediction>> futures;
  futures.reserve(histories.size());
  for (const auto& h : histories) {
    futures.push_back(std::async(std::launch::async, [&h, &catalog, &predictor] {
      return strategy::predict(h, catalog, predictor);
    }));
  }
  // Wait for all before rethrowing so no task outlives the references.
  std::vector<strategy::StrategyPrediction> out;
  std::exception_ptr first_error;
  for (auto& f : futures) {
    try {
      out.push_back(f.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  if (mode != Mode::kGen && k < 1) throw Error(ErrorKind::kConfig, "k must be >= 1");
  if (max_history_chars == 0) throw Error(ErrorKind::kConfig, "max_history_chars must be > 0");
  if (sampling.temperature < 0.0 || sampling.top_p <= 0.0 || sampling.top_p > 1.0) {
    throw Error(ErrorKind::kConfig, "sampling out of range");
  }
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"mode", aptness::to_string(mode)},
          {"k", k},
          {"scheme", aptness::to_string(scheme)},
          {"temperature", sampling.temperature},
          {"top_p", sampling.top_p},
          {"max_history_chars", max_history_chars},
          {"query_source", to_string(query_source)}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("k")) {
      const auto k = j.at("k").get<long long>();
      if (k < 0) throw Error(ErrorKind::kConfig, "k must be >= 1");
      c.k = static_cast<std::size_t>(k);
    }
    if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    if (j.contains("temperature")) c.sampling.temperature = j.at("temperature").get<double>();
    if (j.contains("top_p")) c.sampling.top_p = j.at("top_p").get<double>();
    if (j.contains("max_history_chars")) {
      c.max_history_chars = j.at("max_history_chars").get<std::size_t>();
    }
    if (j.contains("query_source")) {
      c.query_source = parse_query_source(j.at("query_source").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

Dialogue truncate_history(const Dialogue& history, std::size_t max_chars) {
  if (render_history(history).size() <= max_chars || history.size() < 3) return history;
  const auto& utts = history.utterances();
  std::size_t start = 0;
  std::vector<std::pair<Role, std::string>> turns;
  // Keep dropping whole exchanges from the front while too long.
  for (;;) {
    turns.clear();
    for (std::size_t i = start; i < utts.size(); ++i) turns.emplace_back(utts[i].role, utts[i].text);
    Dialogue candidate(history.id(), turns, history.meta());
    if (render_history(candidate).size() <= max_chars || utts.size() - start < 3) {
      return candidate;
    }
    start += 2;
  }
}

DraftResponse generate_draft(const Dialogue& history, const PipelineConfig& config,
                             llm::ChatProvider& chat, const prompt::PromptTemplates& templates,
                             std::string* prompt_out) {
  if (auto v = validate_dialogue(history, true); !v.ok()) {
    throw Error(ErrorKind::kPrecondition, "history not query-ready: " + v.violations.front());
  }
  auto text = render_template(templates.draft, {{"dialogue", render_history(history)}});
  auto req = llm::ChatRequest::user(text, "draft");
  req.temperature = config.sampling.temperature;
  req.top_p = config.sampling.top_p;
  if (prompt_out) *prompt_out = text;
  return {chat_text(chat, req, "draft"), chat.model_id(), config.sampling};
}

FinalResponse run_pipeline(const Dialogue& input, const PipelineConfig& config,
                           const PipelineDeps& deps, PipelineTrace* trace) {
  config.validate();
  if (!deps.chat || !deps.templates) {
    throw Error(ErrorKind::kPrecondition, "pipeline needs a chat provider and templates");
  }
  if (config.mode != Mode::kGen && !deps.retriever) {
    throw Error(ErrorKind::kPrecondition, "retrieval modes need a loaded index");
  }
  if (config.mode == Mode::kAptness && (!deps.catalog || !deps.predictor)) {
    throw Error(ErrorKind::kPrecondition, "aptness mode needs a strategy catalog and predictor");
  }
  const Dialogue history = truncate_history(input, config.max_history_chars);

  FinalResponse out;
  out.mode = config.mode;
  std::string draft_prompt;
  auto draft = generate_draft(history, config, *deps.chat, *deps.templates, &draft_prompt);
  if (trace) trace->draft_prompt = draft_prompt;
  out.provenance.draft = draft;
  if (config.mode == Mode::kGen) {
    out.text = draft.text;
    return out;
  }

  const std::string query =
      config.query_source == QuerySource::kDraft ? draft.text : render_history(history);
  out.provenance.retrieved = deps.retriever->retrieve(query, config.k);

  if (config.mode == Mode::kAptness) {
    std::vector<Dialogue> histories{history};
    for (const auto& r : out.provenance.retrieved) histories.push_back(r.history);
    try {
      auto predictions = predict_all(histories, *deps.catalog, *deps.predictor);
      for (const auto& p : predictions) {
        if (p.fallback) ++out.provenance.greeting_fallbacks;
        out.provenance.unknown_strategy_names += static_cast<int>(p.unknown_names.size());
      }
      out.provenance.strategies =
          strategy::definitions_for(strategy::dedup_ordered(predictions), *deps.catalog);
      if (trace) trace->predictions = std::move(predictions);
    } catch (const Error& e) {
      spdlog::warn("strategy prediction failed, continuing without strategies: {}", e.what());
      out.provenance.strategy_fallback = true;
      out.provenance.strategies.clear();
      if (trace) trace->fallback_reason = e.what();
    }
  }

  auto assembled = prompt::assemble_prompt(history, draft, out.provenance.retrieved,
                                           out.provenance.strategies, *deps.templates);
  if (trace) trace->final_prompt = assembled.text;
  auto req = llm::ChatRequest::user(assembled.text, "final");
  req.temperature = config.sampling.temperature;
  req.top_p = config.sampling.top_p;
  out.text = chat_text(*deps.chat, req, "final");
  return out;
}

}  // namespace aptness::pipeline
