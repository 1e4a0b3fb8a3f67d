#include "aptness/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "aptness/data.hpp"
#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness::eval {

namespace {

std::string lower_name(std::size_t m) { return to_lower(kMetricNames[m]); }

std::optional<std::size_t> metric_index(std::string_view key) {
  const auto k = to_lower(trim(key));
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    if (k == lower_name(m) || k == to_lower(kMetricShort[m]) ||
        k == to_lower(kMetricShort[m]) + ".") {
      return m;
    }
  }
  return std::nullopt;
}

// Rounds to the nearest half point and clamps into [1, 7].
double normalise_score(double v, bool& clamped) {
  double r = std::round(v * 2.0) / 2.0;
  if (r < 1.0 || r > 7.0) {
    clamped = true;
    r = std::clamp(r, 1.0, 7.0);
  }
  return r;
}

std::optional<JudgeParse> parse_lines(std::string_view raw, std::vector<std::string>& missing) {
  static const std::regex line_re(
      R"(^[\s>*#\-]*([A-Za-z]+\.?)[\s*_]*[:=][\s*_]*(-?[0-9]+(?:\.[0-9]+)?))");
  std::array<std::optional<double>, kMetricCount> found{};
  for (const auto& line : split_any(raw, "\n")) {
    std::smatch m;
    const std::string s(line);
    if (!std::regex_search(s, m, line_re)) continue;
    if (auto idx = metric_index(m[1].str()); idx && !found[*idx]) {
      found[*idx] = std::stod(m[2].str());
    }
  }
  JudgeParse out;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    if (!found[m]) {
      missing.emplace_back(kMetricNames[m]);
      continue;
    }
    out.metrics[m] = normalise_score(*found[m], out.clamped);
  }
  if (!missing.empty()) return std::nullopt;
  return out;
}

std::optional<JudgeParse> parse_json_object(std::string_view raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  auto j = nlohmann::json::parse(raw.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  std::array<std::optional<double>, kMetricCount> found{};
  for (const auto& [key, value] : j.items()) {
    auto idx = metric_index(key);
    if (!idx) continue;
    if (value.is_number()) {
      found[*idx] = value.get<double>();
    } else if (value.is_string()) {
      try {
        found[*idx] = std::stod(value.get<std::string>());
      } catch (const std::exception&) {
      }
    }
  }
  JudgeParse out;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    if (!found[m]) return std::nullopt;
    out.metrics[m] = normalise_score(*found[m], out.clamped);
  }
  return out;
}

std::size_t exchange_count(const Dialogue& d) { return d.size() / 2; }

}  // namespace

// --- MetricVector -------------------------------------------------------------

nlohmann::json MetricVector::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t m = 0; m < kMetricCount; ++m) j[lower_name(m)] = values[m];
  return j;
}

MetricVector MetricVector::from_json(const nlohmann::json& j) {
  MetricVector v;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    const auto key = lower_name(m);
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw Error(ErrorKind::kParse, "metric vector lacks " + key);
    }
    v.values[m] = j.at(key).get<double>();
  }
  return v;
}

JudgeParse parse_judge_output(std::string_view raw) {
  std::vector<std::string> missing;
  if (auto r = parse_lines(raw, missing)) return *r;
  if (auto r = parse_json_object(raw)) return *r;
  std::string msg = "judge output lacks:";
  for (const auto& m : missing) msg += " " + m;
  throw ParseError(msg, std::string(raw));
}

// --- TurnScore ----------------------------------------------------------------

nlohmann::json TurnScore::to_json() const {
  return {{"dialogue_id", dialogue_id}, {"turn", turn},         {"response", response},
          {"metrics", metrics.to_json()}, {"judge_raw", judge_raw}, {"clamped", clamped}};
}

TurnScore TurnScore::from_json(const nlohmann::json& j) {
  try {
    TurnScore t;
    t.dialogue_id = j.at("dialogue_id").get<std::string>();
    t.turn = j.at("turn").get<std::size_t>();
    t.response = j.value("response", "");
    t.metrics = MetricVector::from_json(j.at("metrics"));
    t.judge_raw = j.value("judge_raw", "");
    t.clamped = j.value("clamped", false);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad turn score: ") + e.what());
  }
}

nlohmann::json TurnFailure::to_json() const {
  return {{"dialogue_id", dialogue_id}, {"turn", turn}, {"stage", stage}, {"message", message}};
}

TurnFailure TurnFailure::from_json(const nlohmann::json& j) {
  return {j.at("dialogue_id").get<std::string>(), j.at("turn").get<std::size_t>(),
          j.value("stage", ""), j.value("message", "")};
}

TurnScore judge_turn(const Dialogue& history, std::string_view response, std::string dialogue_id,
                     std::size_t turn, llm::ChatProvider& judge, const JudgeOptions& options) {
  if (auto v = validate_dialogue(history, true); !v.ok()) {
    throw Error(ErrorKind::kPrecondition, "judge history not query-ready: " + v.violations.front());
  }
  const std::string tmpl =
      options.prompt_template.empty() ? data::load_template("judge") : options.prompt_template;
  auto req = llm::ChatRequest::user(
      render_template(tmpl, {{"dialogue", render_history(history)},
                             {"response", std::string(response)}}),
      "judge");
  req.temperature = options.temperature;

  std::string last_error;
  for (int attempt = 0; attempt <= options.reasks; ++attempt) {
    auto raw = judge.chat(req).text;
    try {
      auto parsed = parse_judge_output(raw);
      return {std::move(dialogue_id), turn, std::string(response), parsed.metrics, raw,
              parsed.clamped};
    } catch (const ParseError& e) {
      last_error = e.what();
      req.messages.push_back({"assistant", raw});
      req.messages.push_back(
          {"user",
           "That answer could not be read. Reply with exactly six lines of the form "
           "\"Metric: <score>\" for Empathy, Coherence, Informativity, Identification, "
           "Comforting and Suggestion."});
    }
  }
  throw Error(ErrorKind::kJudge, "unparseable judge output after " +
                                     std::to_string(options.reasks) + " re-ask(s): " + last_error);
}

// --- aggregation --------------------------------------------------------------

double EvalReport::completeness() const {
  if (expected_turns == 0) return 1.0;
  return static_cast<double>(turns.size()) / static_cast<double>(expected_turns);
}

EvalReport aggregate(std::vector<TurnScore> scores) {
  if (scores.empty()) throw Error(ErrorKind::kAggregation, "no scored turns to aggregate");
  std::sort(scores.begin(), scores.end(), [](const TurnScore& a, const TurnScore& b) {
    return std::tie(a.dialogue_id, a.turn) < std::tie(b.dialogue_id, b.turn);
  });
  EvalReport r;
  for (std::size_t i = 0; i < scores.size();) {
    std::size_t end = i;
    DialogueMean dm;
    dm.dialogue_id = scores[i].dialogue_id;
    while (end < scores.size() && scores[end].dialogue_id == dm.dialogue_id) {
      if (end > i && scores[end].turn == scores[end - 1].turn) {
        throw Error(ErrorKind::kAggregation, "turn " + std::to_string(scores[end].turn) +
                                                 " of " + dm.dialogue_id + " scored twice");
      }
      for (std::size_t m = 0; m < kMetricCount; ++m) dm.mean[m] += scores[end].metrics[m];
      ++end;
    }
    dm.scored_turns = end - i;
    for (auto& v : dm.mean.values) v /= static_cast<double>(dm.scored_turns);
    r.dialogues.push_back(dm);
    i = end;
  }
  for (const auto& dm : r.dialogues) {
    for (std::size_t m = 0; m < kMetricCount; ++m) r.sc[m] += dm.mean[m];
  }
  for (auto& v : r.sc.values) v /= static_cast<double>(r.dialogues.size());
  r.turns = std::move(scores);
  r.expected_turns = r.turns.size();
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["config"] = config;
  nlohmann::json sc_obj = sc.to_json();
  j["sc"] = sc_obj;
  j["n_dialogues"] = n_dialogues();
  j["expected_turns"] = expected_turns;
  j["scored_turns"] = turns.size();
  j["completeness"] = completeness();
  j["clamped_turns"] = std::count_if(turns.begin(), turns.end(),
                                     [](const TurnScore& t) { return t.clamped; });
  auto& ds = j["dialogues"] = nlohmann::json::array();
  for (const auto& d : dialogues) {
    ds.push_back({{"id", d.dialogue_id}, {"scored_turns", d.scored_turns},
                  {"mean", d.mean.to_json()}});
  }
  auto& ts = j["turns"] = nlohmann::json::array();
  for (const auto& t : turns) ts.push_back(t.to_json());
  auto& fs = j["failures"] = nlohmann::json::array();
  for (const auto& f : failures) fs.push_back(f.to_json());
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.method = j.value("method", "");
    r.config = j.value("config", nlohmann::json::object());
    r.sc = MetricVector::from_json(j.at("sc"));
    r.expected_turns = j.value("expected_turns", std::size_t{0});
    for (const auto& t : j.at("turns")) r.turns.push_back(TurnScore::from_json(t));
    for (const auto& f : j.value("failures", nlohmann::json::array())) {
      r.failures.push_back(TurnFailure::from_json(f));
    }
    for (const auto& d : j.value("dialogues", nlohmann::json::array())) {
      r.dialogues.push_back({d.at("id").get<std::string>(), d.at("scored_turns").get<std::size_t>(),
                             MetricVector::from_json(d.at("mean"))});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad eval report: ") + e.what());
  }
}

// --- test sets ------------------------------------------------------------------

std::vector<Dialogue> read_dialogues(const std::filesystem::path& path) {
  std::vector<Dialogue> out;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    try {
      out.push_back(Dialogue::from_json(row));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Dialogue> extract_testset(const std::vector<Dialogue>& corpus, std::size_t count,
                                      std::size_t turns) {
  if (count == 0) return {};
  if (turns == 0) throw Error(ErrorKind::kExtraction, "turns must be >= 1");
  std::vector<const Dialogue*> usable;
  std::size_t malformed = 0;
  for (const auto& d : corpus) {
    if (validate_dialogue(d, false).ok()) {
      usable.push_back(&d);
    } else {
      ++malformed;
    }
  }
  std::stable_sort(usable.begin(), usable.end(), [](const Dialogue* a, const Dialogue* b) {
    const auto ta = exchange_count(*a);
    const auto tb = exchange_count(*b);
    if (ta != tb) return ta > tb;
    return a->id() < b->id();
  });
  const auto long_enough = static_cast<std::size_t>(
      std::count_if(usable.begin(), usable.end(),
                    [turns](const Dialogue* d) { return exchange_count(*d) >= turns; }));
  if (long_enough < count) {
    std::string msg = "need " + std::to_string(count) + " dialogues with >= " +
                      std::to_string(turns) + " turns, found " + std::to_string(long_enough) +
                      " (corpus " + std::to_string(corpus.size()) + ", malformed " +
                      std::to_string(malformed);
    if (!usable.empty()) msg += ", longest " + std::to_string(exchange_count(*usable.front()));
    throw Error(ErrorKind::kExtraction, msg + ")");
  }
  std::vector<Dialogue> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(usable[i]->first(2 * turns));
  return out;
}

// --- run ------------------------------------------------------------------------

EvalReport run_eval(const std::vector<Dialogue>& testset, const pipeline::PipelineConfig& config,
                    const pipeline::PipelineDeps& deps, llm::ChatProvider& judge,
                    const EvalOptions& options) {
  struct Job {
    const Dialogue* dialogue;
    std::size_t turn;
  };
  std::vector<Job> jobs;
  for (const auto& d : testset) {
    if (auto v = validate_dialogue(d, false); !v.ok()) {
      throw Error(ErrorKind::kData, "test dialogue " + d.id() + ": " + v.violations.front());
    }
    for (std::size_t j = 1; j <= turn_count(d); ++j) jobs.push_back({&d, j});
  }

  std::vector<std::optional<TurnScore>> scores(jobs.size());
  std::vector<std::optional<TurnFailure>> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      const auto& id = job.dialogue->id();
      const auto history = history_prefix(*job.dialogue, job.turn);
      std::string response;
      try {
        response = pipeline::run_pipeline(history, config, deps).text;
      } catch (const std::exception& e) {
        failures[i] = TurnFailure{id, job.turn, "pipeline", e.what()};
        continue;
      }
      try {
        scores[i] = judge_turn(history, response, id, job.turn, judge, options.judge);
      } catch (const std::exception& e) {
        failures[i] = TurnFailure{id, job.turn, "judge", e.what()};
      }
    }
  };
  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min(options.max_in_flight, jobs.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::vector<TurnScore> ok;
  std::vector<TurnFailure> failed;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (scores[i]) ok.push_back(std::move(*scores[i]));
    if (failures[i]) {
      spdlog::warn("turn {} of {} failed at {}: {}", failures[i]->turn, failures[i]->dialogue_id,
                   failures[i]->stage, failures[i]->message);
      failed.push_back(std::move(*failures[i]));
    }
  }
  if (ok.empty()) {
    throw Error(ErrorKind::kAggregation,
                "no turn could be scored (" + std::to_string(failed.size()) + " failures)");
  }
  auto report = aggregate(std::move(ok));
  report.failures = std::move(failed);
  report.expected_turns = jobs.size();
  report.method = options.method.empty() ? std::string(to_string(config.mode)) : options.method;
  report.config = config.to_json();
  if (deps.chat) report.config["chat_model"] = deps.chat->model_id();
  report.config["judge_model"] = judge.model_id();
  report.config["judge_temperature"] = options.judge.temperature;
  return report;
}

}  // namespace aptness::eval
