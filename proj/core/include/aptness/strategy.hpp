#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/gateway.hpp"
#include "aptness/model.hpp"

namespace aptness::strategy {

struct CatalogEntry {
  std::string name;
  std::string definition;
};

// Named emotional-support strategies of one scheme. The ESConv "Others"
// category and unlabelled ExTES turns are both called "Greetings".
class StrategyCatalog {
 public:
  // Enforces unique names, a "Greetings" entry, and the scheme's size
  // (18 entries for ExTES, 8 for ESConv).
  static StrategyCatalog from_json(const nlohmann::json& j);
  static StrategyCatalog load(const std::filesystem::path& path);
  static StrategyCatalog shipped(Scheme scheme);

  Scheme scheme() const noexcept { return scheme_; }
  const std::vector<CatalogEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  // Case-insensitive after trimming; "Others" resolves to "Greetings".
  std::optional<std::size_t> find(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  Scheme scheme_ = Scheme::kExTES;
  std::vector<CatalogEntry> entries_;
};

inline constexpr std::string_view kGreetings = "Greetings";

struct StrategyPrediction {
  std::string history_id;
  std::vector<StrategyName> strategies;
  // True when no predicted name was recognised and "Greetings" was used.
  bool fallback = false;
  std::vector<std::string> unknown_names;
};

// Returns the raw model answer for one query-ready history.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string predict_raw(const Dialogue& history, const StrategyCatalog& catalog) = 0;
};

// The strategy prompt: definitions, task description, then the history.
std::string build_strategy_prompt(const Dialogue& history, const StrategyCatalog& catalog,
                                  const std::string& prompt_template);

// Asks a general chat model with the strategy prompt (no fine-tuning).
class PromptPredictor : public Predictor {
 public:
  explicit PromptPredictor(llm::ChatProvider& provider, std::string prompt_template = {});
  std::string predict_raw(const Dialogue& history, const StrategyCatalog& catalog) override;

 private:
  llm::ChatProvider& provider_;
  std::string template_;
};

// Sends the strategy prompt verbatim, as a single user turn at temperature
// 0, to an endpoint serving a model fine-tuned on the exported SFT file.
class EndpointPredictor : public Predictor {
 public:
  explicit EndpointPredictor(llm::ChatProvider& provider, std::string prompt_template = {});
  std::string predict_raw(const Dialogue& history, const StrategyCatalog& catalog) override;

 private:
  llm::ChatProvider& provider_;
  std::string template_;
};

// Deterministic answers keyed by the history's last utterance text.
class TablePredictor : public Predictor {
 public:
  TablePredictor(std::map<std::string, std::string> answers, std::string fallback_answer);
  std::string predict_raw(const Dialogue& history, const StrategyCatalog& catalog) override;

 private:
  std::map<std::string, std::string> answers_;
  std::string fallback_;
};

// Splits on comma, semicolon and newline; strips labels, bullets, quotes.
std::vector<std::string> parse_strategy_names(std::string_view raw);

// Never returns a name outside the catalog. Predictor failures surface as
// kPrediction errors.
StrategyPrediction predict(const Dialogue& history, const StrategyCatalog& catalog,
                           Predictor& predictor);

// Flattens in input order and keeps the first occurrence of every name.
std::vector<std::string> dedup_ordered(const std::vector<StrategyPrediction>& predictions);

std::vector<StrategyUse> definitions_for(const std::vector<std::string>& names,
                                         const StrategyCatalog& catalog);

// --- SFT export -------------------------------------------------------------

struct SftRecord {
  std::string prompt;
  std::string completion;

  nlohmann::json to_json() const { return {{"prompt", prompt}, {"completion", completion}}; }
};

struct SftPlan {
  std::size_t max_records = 10000;
  std::size_t rebalance_floor = 100;
  std::uint64_t seed = 7;
};

// One labelled Listener turn with the history before it.
struct LabeledSample {
  Dialogue history;
  std::vector<std::string> labels;
};

// Reads canonical dialogue .jsonl where Listener utterances carry a
// "strategy" field (string or list). Unlabelled Listener turns and "Others"
// become "Greetings". Turns with no preceding history are skipped.
std::vector<LabeledSample> load_labeled_corpus(const std::filesystem::path& path);

// Indices into `samples` (ascending) chosen by the rebalancing rule:
// strategies whose proportional share falls below the floor contribute
// min(count, floor) samples; the remaining budget is split over the other
// strategies in proportion to their frequency. Deterministic in plan.seed.
std::vector<std::size_t> select_sft_samples(const std::vector<LabeledSample>& samples,
                                            const StrategyCatalog& catalog, const SftPlan& plan);

// Throws kExport listing every label that is not in the catalog.
std::vector<SftRecord> export_sft(const std::vector<LabeledSample>& samples,
                                  const StrategyCatalog& catalog, const SftPlan& plan,
                                  const std::string& prompt_template = {});

}  // namespace aptness::strategy
