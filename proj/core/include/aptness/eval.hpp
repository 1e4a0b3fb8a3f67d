#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/gateway.hpp"
#include "aptness/model.hpp"
#include "aptness/pipeline.hpp"

namespace aptness::eval {

inline constexpr std::size_t kMetricCount = 6;
inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "Empathy", "Coherence", "Informativity", "Identification", "Comforting", "Suggestion"};
inline constexpr std::array<std::string_view, kMetricCount> kMetricShort = {
    "Emp", "Coh", "Inf", "Iden", "Comf", "Sug"};

// Six 7-point scores in kMetricNames order.
struct MetricVector {
  std::array<double, kMetricCount> values{};

  double& operator[](std::size_t i) { return values.at(i); }
  double operator[](std::size_t i) const { return values.at(i); }
  double empathy() const { return values[0]; }

  // {"empathy": x, "coherence": y, ...}
  nlohmann::json to_json() const;
  static MetricVector from_json(const nlohmann::json& j);
  bool operator==(const MetricVector&) const = default;
};

struct JudgeParse {
  MetricVector metrics;
  bool clamped = false;
};

// Accepts "Metric: <score>" lines (case-insensitive, short names allowed,
// markdown emphasis tolerated) or a JSON object. Scores are rounded to the
// nearest half point and clamped to [1, 7]. Throws ParseError naming the
// missing metrics.
JudgeParse parse_judge_output(std::string_view raw);

struct TurnScore {
  std::string dialogue_id;
  std::size_t turn = 0;
  std::string response;
  MetricVector metrics;
  std::string judge_raw;
  bool clamped = false;

  nlohmann::json to_json() const;
  static TurnScore from_json(const nlohmann::json& j);
};

struct JudgeOptions {
  std::string prompt_template;  // empty: shipped "judge" template
  double temperature = 0.0;
  int reasks = 2;
};

// One judge call plus up to `reasks` follow-ups on unparseable output; then
// kJudge.
TurnScore judge_turn(const Dialogue& history, std::string_view response, std::string dialogue_id,
                     std::size_t turn, llm::ChatProvider& judge, const JudgeOptions& options = {});

struct TurnFailure {
  std::string dialogue_id;
  std::size_t turn = 0;
  std::string stage;  // "pipeline" or "judge"
  std::string message;

  nlohmann::json to_json() const;
  static TurnFailure from_json(const nlohmann::json& j);
};

struct DialogueMean {
  std::string dialogue_id;
  std::size_t scored_turns = 0;
  MetricVector mean;
};

struct EvalReport {
  std::string method;
  nlohmann::json config = nlohmann::json::object();
  std::vector<TurnScore> turns;  // sorted by (dialogue_id, turn)
  std::vector<TurnFailure> failures;
  std::vector<DialogueMean> dialogues;
  MetricVector sc;
  std::size_t expected_turns = 0;

  std::size_t n_dialogues() const noexcept { return dialogues.size(); }
  double completeness() const;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Mean over turns within each dialogue, then the unweighted mean
// over dialogues. Throws kAggregation on empty input or a repeated
// (dialogue_id, turn).
EvalReport aggregate(std::vector<TurnScore> scores);

// Sample Pearson correlation. Throws kStatistics on length mismatch, n < 2
// or a constant series.
double pearson(std::span<const double> x, std::span<const double> y);

// Sub-metric vs Empathy over method-level SC rows.
struct CorrelationTable {
  std::vector<std::string> methods;
  // Index 0 (Empathy) is unused; a constant column leaves nullopt.
  std::array<std::optional<double>, kMetricCount> r{};
  bool available = false;
  std::string note;

  nlohmann::json to_json() const;
};

CorrelationTable correlation_table(const std::vector<std::pair<std::string, MetricVector>>& rows);

// Longest dialogues first (ties by id), `count` of them, each cut to exactly
// `turns` exchanges. Throws kExtraction with an availability report.
std::vector<Dialogue> extract_testset(const std::vector<Dialogue>& corpus, std::size_t count,
                                      std::size_t turns);

std::vector<Dialogue> read_dialogues(const std::filesystem::path& path);

struct EvalOptions {
  std::string method;
  JudgeOptions judge;
  std::size_t max_in_flight = 4;
};

// For every dialogue and j in 1..turn_count: history_prefix, pipeline,
// judge. Per-turn failures are recorded and excluded from aggregation.
EvalReport run_eval(const std::vector<Dialogue>& testset, const pipeline::PipelineConfig& config,
                    const pipeline::PipelineDeps& deps, llm::ChatProvider& judge,
                    const EvalOptions& options = {});

}  // namespace aptness::eval
