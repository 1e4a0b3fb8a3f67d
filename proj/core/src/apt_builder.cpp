#include "aptness/apt_builder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "aptness/data.hpp"
#include "aptness/text.hpp"

namespace aptness::apt {

using nlohmann::json;

// --- palette ------------------------------------------------------------------

EmotionPalette EmotionPalette::from_json(const json& j) {
  if (!j.contains("major_categories") || !j["major_categories"].is_array()) {
    throw Error(ErrorKind::kData, "palette needs a 'major_categories' array");
  }
  EmotionPalette p;
  std::set<std::string> seen;
  for (const auto& m : j["major_categories"]) {
    MajorCategory major;
    major.name = m.at("name").get<std::string>();
    for (const auto& s : m.at("subcategories")) {
      auto name = trim(s.get<std::string>());
      if (name.empty()) throw Error(ErrorKind::kData, "empty subcategory in " + major.name);
      if (!seen.insert(normalize_key(name)).second) {
        throw Error(ErrorKind::kData, "subcategory '" + name + "' appears twice in palette");
      }
      major.subcategories.push_back(std::move(name));
    }
    p.majors_.push_back(std::move(major));
  }
  return p;
}

EmotionPalette EmotionPalette::load(const std::filesystem::path& path) {
  return from_json(json::parse(read_file(path)));
}

EmotionPalette EmotionPalette::shipped() { return from_json(json::parse(data::load("palette.json"))); }

std::vector<std::string> EmotionPalette::subcategories() const {
  std::vector<std::string> out;
  for (const auto& m : majors_) out.insert(out.end(), m.subcategories.begin(), m.subcategories.end());
  return out;
}

bool EmotionPalette::contains(std::string_view emotion) const {
  const auto key = normalize_key(emotion);
  for (const auto& m : majors_) {
    for (const auto& s : m.subcategories) {
      if (normalize_key(s) == key) return true;
    }
  }
  return false;
}

std::size_t EmotionPalette::position(std::string_view emotion) const {
  const auto key = normalize_key(emotion);
  std::size_t i = 0;
  for (const auto& m : majors_) {
    for (const auto& s : m.subcategories) {
      if (normalize_key(s) == key) return i;
      ++i;
    }
  }
  throw Error(ErrorKind::kData, "emotion '" + std::string(emotion) + "' is not in the palette");
}

// --- plan / records -------------------------------------------------------------

void BuildPlan::validate() const {
  if (factors_per_emotion < 1 || situations_per_factor < 1 || dialogues_per_situation < 1) {
    throw Error(ErrorKind::kConfig, "build plan counts must all be >= 1");
  }
  if (retry_budget < 0 || max_in_flight < 1) {
    throw Error(ErrorKind::kConfig, "build plan needs retry_budget >= 0 and max_in_flight >= 1");
  }
}

BuildPlan BuildPlan::from_json(const json& j) {
  BuildPlan p;
  p.factors_per_emotion = j.value("factors_per_emotion", p.factors_per_emotion);
  p.situations_per_factor = j.value("situations_per_factor", p.situations_per_factor);
  p.dialogues_per_situation = j.value("dialogues_per_situation", p.dialogues_per_situation);
  p.seed = j.value("seed", p.seed);
  p.checkpoint_path = j.value("checkpoint_path", std::string{});
  p.retry_budget = j.value("retry_budget", p.retry_budget);
  p.max_in_flight = j.value("max_in_flight", p.max_in_flight);
  p.emotions = j.value("emotions", std::vector<std::string>{});
  p.validate();
  return p;
}

json BuildPlan::to_json() const {
  return {{"factors_per_emotion", factors_per_emotion},
          {"situations_per_factor", situations_per_factor},
          {"dialogues_per_situation", dialogues_per_situation},
          {"seed", seed},
          {"checkpoint_path", checkpoint_path.string()},
          {"retry_budget", retry_budget},
          {"max_in_flight", max_in_flight},
          {"emotions", emotions}};
}

json AptRecord::to_json() const {
  return {{"id", id},
          {"emotion", emotion},
          {"factor", factor},
          {"situation", situation},
          {"dialogue", dialogue.to_json()},
          {"final_response", final_response}};
}

AptRecord AptRecord::from_json(const json& j) {
  AptRecord r;
  r.id = j.at("id").get<std::string>();
  r.emotion = j.at("emotion").get<std::string>();
  r.factor = j.at("factor").get<std::string>();
  r.situation = j.at("situation").get<std::string>();
  r.dialogue = Dialogue::from_json(j.at("dialogue"));
  r.final_response = j.at("final_response").get<std::string>();
  return r;
}

std::vector<std::string> AptRecord::violations(const EmotionPalette& palette) const {
  std::vector<std::string> out;
  if (!palette.contains(emotion)) out.push_back("emotion '" + emotion + "' not in palette");
  auto v = validate_dialogue(dialogue, false);
  out.insert(out.end(), v.violations.begin(), v.violations.end());
  if (dialogue.empty() || dialogue.back().role != Role::kListener) {
    out.push_back("dialogue does not end with a Listener turn");
  } else if (dialogue.back().text != final_response) {
    out.push_back("final_response differs from the last Listener utterance");
  }
  return out;
}

std::string record_id(std::string_view emotion, int factor_idx, int situation_idx,
                      int dialogue_idx) {
  return std::string(emotion) + "/" + std::to_string(factor_idx) + "/" +
         std::to_string(situation_idx) + "/" + std::to_string(dialogue_idx);
}

BuilderPrompts BuilderPrompts::load(const std::filesystem::path& override_dir) {
  BuilderPrompts p;
  p.factors = data::load_template("factors", override_dir);
  p.situations = data::load_template("situations", override_dir);
  p.few_shot = data::load_template("few_shot", override_dir);
  p.opening = data::load_template("dialogue_opening", override_dir);
  p.continuation = data::load_template("dialogue_continuation", override_dir);
  p.rethink = data::load_template("dialogue_rethink", override_dir);
  return p;
}

// --- parsing --------------------------------------------------------------------

namespace {

std::string strip_bullet(std::string line) {
  line = trim(line);
  std::size_t i = 0;
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    i = 1;
  } else if (line.rfind("\xE2\x80\xA2", 0) == 0) {  // U+2022 bullet
    i = 3;
  } else {
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')' || line[i] == ':')) {
      ++i;
    } else {
      i = 0;
    }
  }
  line = trim(std::string_view(line).substr(i));
  if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
    line = trim(std::string_view(line).substr(1, line.size() - 2));
  }
  return line;
}

bool mentions_role_label(std::string_view item) {
  const auto lower = to_lower(item);
  return lower.find("speaker:") != std::string::npos ||
         lower.find("listener:") != std::string::npos;
}

std::string avoid_block(const std::vector<std::string>& accepted) {
  if (accepted.empty()) return {};
  std::string out = "Do not repeat any of these:\n";
  for (const auto& a : accepted) out += "- " + a + "\n";
  return out;
}

bool is_provider_failure(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kTransport:
    case ErrorKind::kRequest:
    case ErrorKind::kReplay:
    case ErrorKind::kProviderContract:
      return true;
    default:
      return false;
  }
}

// Shared re-prompt loop for factor and situation lists.
std::vector<std::string> collect_distinct(const std::string& what, int count,
                                          const BuildPlan& plan, llm::ChatProvider& provider,
                                          const std::function<llm::ChatRequest(
                                              const std::vector<std::string>&)>& make_request,
                                          bool reject_role_labels) {
  std::vector<std::string> accepted;
  std::set<std::string> keys;
  const int max_attempts = 1 + plan.retry_budget;
  std::string last_raw;
  std::string last_error;
  bool last_was_parse = false;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    std::string raw;
    try {
      raw = provider.chat(make_request(accepted)).text;
    } catch (const Error& e) {
      if (!is_provider_failure(e)) throw;
      last_error = e.what();
      last_was_parse = false;
      continue;
    }
    last_raw = raw;
    std::vector<std::string> items;
    try {
      items = parse_item_list(raw, count);
    } catch (const ParseError& e) {
      last_error = e.what();
      last_was_parse = true;
      continue;
    }
    last_was_parse = false;
    bool repeated = false;
    std::set<std::string> seen_in_reply;
    for (const auto& item : items) {
      const auto key = normalize_key(item);
      if (!seen_in_reply.insert(key).second) {
        repeated = true;
        continue;
      }
      if (reject_role_labels && mentions_role_label(item)) {
        repeated = true;
        continue;
      }
      // Items already accepted in an earlier attempt are skipped quietly.
      if (keys.insert(key).second) accepted.push_back(item);
    }
    if (static_cast<int>(accepted.size()) >= count && !repeated) break;
    if (repeated) {
      last_error = what + " reply repeated itself";
      spdlog::debug("{}: repetition in provider reply, re-prompting", what);
    } else {
      last_error = "only " + std::to_string(accepted.size()) + " distinct " + what + " so far";
    }
  }

  if (static_cast<int>(accepted.size()) >= count) {
    accepted.resize(static_cast<std::size_t>(count));
    return accepted;
  }
  if (last_was_parse) {
    throw ParseError(what + ": unparseable provider reply after " +
                         std::to_string(max_attempts) + " attempt(s): " + last_error,
                     last_raw);
  }
  throw BuildError(what + ": gave up after " + std::to_string(max_attempts) +
                       " attempt(s): " + last_error,
                   accepted);
}

}  // namespace

std::vector<std::string> parse_item_list(std::string_view raw, int expected_count) {
  std::vector<std::string> items;
  std::size_t non_empty_lines = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= raw.size(); ++i) {
    if (i == raw.size() || raw[i] == '\n') {
      auto line = strip_bullet(std::string(raw.substr(start, i - start)));
      if (!line.empty()) {
        ++non_empty_lines;
        items.push_back(std::move(line));
      }
      start = i + 1;
    }
  }
  if (items.empty()) {
    throw ParseError("provider reply contains no list items", std::string(raw));
  }
  if (expected_count > 1 && non_empty_lines == 1) {
    throw ParseError("expected a list of " + std::to_string(expected_count) +
                         " lines, got a single paragraph",
                     std::string(raw));
  }
  return items;
}

Dialogue parse_generated_dialogue(std::string_view raw, std::string_view opening,
                                  std::string id) {
  std::vector<std::pair<Role, std::string>> turns;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= raw.size(); ++i) {
    if (i != raw.size() && raw[i] != '\n') continue;
    std::string line = trim(raw.substr(start, i - start));
    start = i + 1;
    if (line.empty()) continue;
    line.erase(std::remove(line.begin(), line.end(), '*'), line.end());
    std::optional<Role> role;
    std::size_t skip = 0;
    if (starts_with_icase(line, "speaker:")) {
      role = Role::kSpeaker;
      skip = 8;
    } else if (starts_with_icase(line, "listener:")) {
      role = Role::kListener;
      skip = 9;
    }
    if (role) {
      auto text = trim(std::string_view(line).substr(skip));
      if (!text.empty()) turns.emplace_back(*role, std::move(text));
    } else if (!turns.empty()) {
      turns.back().second += " " + line;
    }
  }
  if (turns.empty()) {
    throw ParseError("dialogue reply has no Speaker/Listener lines", std::string(raw));
  }
  if (turns.front().first == Role::kListener) {
    turns.insert(turns.begin(), {Role::kSpeaker, trim(opening)});
  }
  while (!turns.empty() && turns.back().first == Role::kSpeaker) turns.pop_back();
  if (turns.size() < 2) {
    throw ParseError("dialogue reply has no Listener turn", std::string(raw));
  }
  Dialogue d(std::move(id), turns);
  auto v = validate_dialogue(d, false);
  if (!v.ok()) {
    throw ParseError("generated dialogue failed alternation repair: " + v.violations.front(),
                     std::string(raw));
  }
  return d;
}

// --- generation -----------------------------------------------------------------

std::vector<std::string> generate_factors(const EmotionPalette& palette,
                                          std::string_view emotion, const BuildPlan& plan,
                                          llm::ChatProvider& provider,
                                          const BuilderPrompts& prompts) {
  if (!palette.contains(emotion)) {
    throw Error(ErrorKind::kPrecondition,
                "emotion '" + std::string(emotion) + "' is not in the palette");
  }
  const int count = plan.factors_per_emotion;
  auto make = [&](const std::vector<std::string>& accepted) {
    auto req = llm::ChatRequest::user(
        render_template(prompts.factors, {{"emotion", std::string(emotion)},
                                          {"count", std::to_string(count)},
                                          {"few_shot", prompts.few_shot},
                                          {"avoid", avoid_block(accepted)}}),
        "factors");
    req.seed = plan.seed;
    req.hints["count"] = std::to_string(count);
    return req;
  };
  return collect_distinct("factors for '" + std::string(emotion) + "'", count, plan, provider,
                          make, false);
}

std::vector<std::string> generate_situations(const EmotionPalette& palette,
                                             std::string_view emotion, std::string_view factor,
                                             const BuildPlan& plan, llm::ChatProvider& provider,
                                             const BuilderPrompts& prompts) {
  if (!palette.contains(emotion)) {
    throw Error(ErrorKind::kPrecondition,
                "emotion '" + std::string(emotion) + "' is not in the palette");
  }
  if (trim(factor).empty()) throw Error(ErrorKind::kPrecondition, "empty factor");
  const int count = plan.situations_per_factor;
  auto make = [&](const std::vector<std::string>& accepted) {
    auto req = llm::ChatRequest::user(
        render_template(prompts.situations, {{"emotion", std::string(emotion)},
                                             {"factor", std::string(factor)},
                                             {"count", std::to_string(count)},
                                             {"few_shot", prompts.few_shot},
                                             {"avoid", avoid_block(accepted)}}),
        "situations");
    req.seed = plan.seed;
    req.hints["count"] = std::to_string(count);
    return req;
  };
  return collect_distinct("situations for '" + std::string(emotion) + "/" + std::string(factor) +
                              "'",
                          count, plan, provider, make, true);
}

namespace {

// Runs one dialogue stage under the retry budget; `step` returns the stage
// result or throws ParseError / provider errors, which count as attempts.
template <typename Step>
auto run_stage(const std::string& stage, const BuildPlan& plan, Step&& step)
    -> decltype(step()) {
  const int max_attempts = 1 + plan.retry_budget;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    try {
      return step();
    } catch (const ParseError& e) {
      last_error = e.what();
    } catch (const Error& e) {
      if (!is_provider_failure(e)) throw;
      last_error = e.what();
    }
    spdlog::debug("stage {} attempt {} failed: {}", stage, attempt, last_error);
  }
  throw BuildError("stage " + stage + " failed after " + std::to_string(max_attempts) +
                       " attempt(s): " + last_error,
                   {});
}

std::string strip_listener_label(std::string text) {
  text = trim(text);
  if (starts_with_icase(text, "listener:")) text = trim(std::string_view(text).substr(9));
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    text = trim(std::string_view(text).substr(1, text.size() - 2));
  }
  return text;
}

}  // namespace

AptRecord generate_dialogue(std::string_view emotion, std::string_view factor,
                            std::string_view situation, std::string id, const BuildPlan& plan,
                            llm::ChatProvider& provider, const BuilderPrompts& prompts) {
  if (trim(emotion).empty() || trim(factor).empty() || trim(situation).empty()) {
    throw Error(ErrorKind::kPrecondition, "generate_dialogue needs emotion, factor and situation");
  }
  const std::map<std::string, std::string> base_slots = {{"emotion", std::string(emotion)},
                                                         {"factor", std::string(factor)},
                                                         {"situation", std::string(situation)}};

  const std::string opening = run_stage("opening", plan, [&] {
    auto req = llm::ChatRequest::user(render_template(prompts.opening, base_slots),
                                      "dialogue_opening");
    req.seed = plan.seed;
    std::string text = trim(provider.chat(req).text);
    if (starts_with_icase(text, "speaker:")) text = trim(std::string_view(text).substr(8));
    if (text.empty()) throw ParseError("empty opening utterance", text);
    return text;
  });

  Dialogue draft = run_stage("continuation", plan, [&] {
    auto slots = base_slots;
    slots["opening"] = opening;
    auto req = llm::ChatRequest::user(render_template(prompts.continuation, slots),
                                      "dialogue_continuation");
    req.seed = plan.seed;
    return parse_generated_dialogue(provider.chat(req).text, opening, id);
  });

  const std::string final_response = run_stage("rethink", plan, [&] {
    auto slots = base_slots;
    slots["dialogue"] = render_history(draft);
    auto req = llm::ChatRequest::user(render_template(prompts.rethink, slots), "dialogue_rethink");
    req.seed = plan.seed;
    auto raw = provider.chat(req).text;
    auto text = strip_listener_label(raw);
    if (text.empty()) throw ParseError("empty regenerated Listener turn", raw);
    return text;
  });

  std::vector<std::pair<Role, std::string>> turns;
  for (const auto& u : draft.utterances()) turns.emplace_back(u.role, u.text);
  turns.back().second = final_response;

  AptRecord record;
  record.id = std::move(id);
  record.emotion = std::string(emotion);
  record.factor = std::string(factor);
  record.situation = std::string(situation);
  record.dialogue = Dialogue(record.id, turns, json{{"emotion", record.emotion}});
  record.final_response = final_response;
  return record;
}

// --- build driver -------------------------------------------------------------------

namespace {

struct Checkpoint {
  std::map<std::string, std::vector<std::string>> factors;     // emotion
  std::map<std::string, std::vector<std::string>> situations;  // emotion/f
  std::map<std::string, std::vector<AptRecord>> triples;       // emotion/f/s
};

std::string plan_fingerprint(const BuildPlan& plan, const std::vector<std::string>& emotions) {
  json j = {{"factors", plan.factors_per_emotion},
            {"situations", plan.situations_per_factor},
            {"dialogues", plan.dialogues_per_situation},
            {"seed", plan.seed},
            {"emotions", emotions}};
  return hex64(fnv1a64(j.dump()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& fingerprint) {
  Checkpoint ckpt;
  const std::string content = read_file(path);
  std::size_t start = 0;
  std::size_t line_no = 0;
  bool saw_plan = false;
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorKind::kCheckpoint, "checkpoint " + path.string() + " line " +
                                             std::to_string(line_no) + ": " + why +
                                             "; refusing to resume (use --fresh)");
  };
  while (start < content.size()) {
    const auto nl = content.find('\n', start);
    ++line_no;
    // A trailing line without newline is a write cut short by a crash; drop it.
    if (nl == std::string::npos) break;
    const std::string line = content.substr(start, nl - start);
    start = nl + 1;
    if (trim(line).empty()) continue;
    json row;
    try {
      row = json::parse(line);
      const auto kind = row.at("kind").get<std::string>();
      if (kind == "plan") {
        if (row.at("fingerprint").get<std::string>() != fingerprint) {
          throw corrupt("written for a different build plan");
        }
        saw_plan = true;
      } else if (kind == "factors") {
        ckpt.factors[row.at("emotion").get<std::string>()] =
            row.at("items").get<std::vector<std::string>>();
      } else if (kind == "situations") {
        ckpt.situations[row.at("key").get<std::string>()] =
            row.at("items").get<std::vector<std::string>>();
      } else if (kind == "triple") {
        std::vector<AptRecord> records;
        for (const auto& r : row.at("records")) records.push_back(AptRecord::from_json(r));
        ckpt.triples[row.at("id").get<std::string>()] = std::move(records);
      } else {
        throw corrupt("unknown entry kind '" + kind + "'");
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kCheckpoint) throw;
      throw corrupt(e.what());
    } catch (const json::exception& e) {
      throw corrupt(e.what());
    }
  }
  if (!saw_plan && !content.empty()) throw corrupt("missing plan header");
  return ckpt;
}

class CheckpointWriter {
 public:
  explicit CheckpointWriter(const std::filesystem::path& path)
      : out_(path, std::ios::app | std::ios::binary) {
    if (!out_) throw Error(ErrorKind::kCheckpoint, "cannot open checkpoint " + path.string());
  }
  void append(const json& row) {
    out_ << row.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::tuple<std::size_t, int, int, int> sort_key(const EmotionPalette& palette,
                                                const AptRecord& r) {
  // id = emotion/f/s/d; the emotion itself may not contain '/'.
  const auto parts = split_any(r.id, "/");
  if (parts.size() != 4) throw Error(ErrorKind::kData, "malformed record id '" + r.id + "'");
  return {palette.position(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]),
          std::stoi(parts[3])};
}

}  // namespace

BuildStats run_build(const EmotionPalette& palette, const BuildPlan& plan,
                     llm::ChatProvider& provider, const std::filesystem::path& out_path,
                     bool fresh, const BuilderPrompts& prompts) {
  plan.validate();
  std::vector<std::string> emotions = plan.emotions.empty() ? palette.subcategories() : plan.emotions;
  for (const auto& e : emotions) {
    if (!palette.contains(e)) {
      throw Error(ErrorKind::kConfig, "plan emotion '" + e + "' is not in the palette");
    }
  }

  auto ckpt_path = plan.checkpoint_path;
  if (ckpt_path.empty()) {
    ckpt_path = out_path;
    ckpt_path += ".ckpt.jsonl";
  }
  const auto fingerprint = plan_fingerprint(plan, emotions);
  if (fresh) std::filesystem::remove(ckpt_path);
  Checkpoint ckpt;
  if (std::filesystem::exists(ckpt_path)) ckpt = load_checkpoint(ckpt_path, fingerprint);
  const bool new_file = !std::filesystem::exists(ckpt_path) ||
                        std::filesystem::file_size(ckpt_path) == 0;
  CheckpointWriter writer(ckpt_path);
  if (new_file) writer.append({{"kind", "plan"}, {"fingerprint", fingerprint}, {"plan", plan.to_json()}});

  BuildStats stats;
  auto fail = [&](const std::string& subtree, const Error& e) {
    ++stats.failed_subtrees;
    stats.failures.push_back(subtree + ": " + e.what());
    spdlog::warn("build subtree {} failed: {}", subtree, e.what());
  };

  struct Triple {
    std::string emotion, factor, situation;
    int f, s;
  };
  std::vector<Triple> pending;

  for (const auto& emotion : emotions) {
    auto fit = ckpt.factors.find(emotion);
    if (fit == ckpt.factors.end()) {
      try {
        auto items = generate_factors(palette, emotion, plan, provider, prompts);
        writer.append({{"kind", "factors"}, {"emotion", emotion}, {"items", items}});
        fit = ckpt.factors.emplace(emotion, std::move(items)).first;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kBuild && e.kind() != ErrorKind::kParse) throw;
        fail(emotion, e);
        continue;
      }
    }
    const auto& factors = fit->second;
    for (int f = 0; f < static_cast<int>(factors.size()); ++f) {
      const std::string key = emotion + "/" + std::to_string(f);
      auto sit = ckpt.situations.find(key);
      if (sit == ckpt.situations.end()) {
        try {
          auto items = generate_situations(palette, emotion, factors[static_cast<std::size_t>(f)],
                                           plan, provider, prompts);
          writer.append({{"kind", "situations"}, {"key", key}, {"items", items}});
          sit = ckpt.situations.emplace(key, std::move(items)).first;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kBuild && e.kind() != ErrorKind::kParse) throw;
          fail(key, e);
          continue;
        }
      }
      const auto& situations = sit->second;
      for (int s = 0; s < static_cast<int>(situations.size()); ++s) {
        const std::string triple_id = key + "/" + std::to_string(s);
        if (ckpt.triples.count(triple_id) == 0) {
          pending.push_back({emotion, factors[static_cast<std::size_t>(f)],
                             situations[static_cast<std::size_t>(s)], f, s});
        }
      }
    }
  }

  // Triples fan out in bounded batches; the journal is written by this thread
  // in triple order so checkpoints are deterministic.
  const std::size_t batch = static_cast<std::size_t>(plan.max_in_flight);
  for (std::size_t begin = 0; begin < pending.size(); begin += batch) {
    const std::size_t end = std::min(pending.size(), begin + batch);
    std::vector<std::future<std::vector<AptRecord>>> futures;
    for (std::size_t i = begin; i < end; ++i) {
      const Triple& t = pending[i];
      futures.push_back(std::async(batch == 1 ? std::launch::deferred : std::launch::async, [&, t] {
        std::vector<AptRecord> records;
        for (int d = 0; d < plan.dialogues_per_situation; ++d) {
          records.push_back(generate_dialogue(t.emotion, t.factor, t.situation,
                                              record_id(t.emotion, t.f, t.s, d), plan, provider,
                                              prompts));
        }
        return records;
      }));
    }
    for (std::size_t i = begin; i < end; ++i) {
      const Triple& t = pending[i];
      const std::string triple_id = t.emotion + "/" + std::to_string(t.f) + "/" + std::to_string(t.s);
      try {
        auto records = futures[i - begin].get();
        json rows = json::array();
        for (const auto& r : records) rows.push_back(r.to_json());
        writer.append({{"kind", "triple"}, {"id", triple_id}, {"records", rows}});
        ckpt.triples.emplace(triple_id, std::move(records));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kBuild && e.kind() != ErrorKind::kParse) throw;
        fail(triple_id, e);
      }
    }
  }

  std::vector<AptRecord> all;
  for (auto& [_, records] : ckpt.triples) {
    for (auto& r : records) all.push_back(std::move(r));
  }
  std::sort(all.begin(), all.end(), [&](const AptRecord& a, const AptRecord& b) {
    return sort_key(palette, a) < sort_key(palette, b);
  });
  std::string content;
  for (const auto& r : all) {
    content += r.to_json().dump();
    content.push_back('\n');
    for (const auto& u : r.dialogue.utterances()) {
      if (u.role == Role::kListener) ++stats.responses;
    }
  }
  write_file_atomic(out_path, content);

  for (const auto& [emotion, items] : ckpt.factors) {
    if (std::find(emotions.begin(), emotions.end(), emotion) == emotions.end()) continue;
    ++stats.emotions;
    stats.factors += items.size();
  }
  for (const auto& [key, items] : ckpt.situations) stats.situations += items.size();
  stats.dialogues = all.size();
  return stats;
}

json BuildStats::to_json() const {
  return {{"emotions", emotions},
          {"factors", factors},
          {"situations", situations},
          {"dialogues", dialogues},
          {"responses", responses},
          {"failed_subtrees", failed_subtrees},
          {"failures", failures}};
}

std::vector<AptRecord> read_database(const std::filesystem::path& db_path) {
  std::vector<AptRecord> out;
  std::size_t line_no = 0;
  std::ifstream in(db_path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kData, "cannot open " + db_path.string());
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(AptRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kParse, db_path.string() + ":" + std::to_string(line_no) +
                                         ": malformed record: " + e.what());
    }
  }
  return out;
}

BuildStats compute_stats(const std::filesystem::path& db_path) {
  BuildStats stats;
  std::set<std::string> emotions, factors, situations;
  for (const auto& r : read_database(db_path)) {
    const auto parts = split_any(r.id, "/");
    emotions.insert(r.emotion);
    if (parts.size() == 4) {
      factors.insert(parts[0] + "/" + parts[1]);
      situations.insert(parts[0] + "/" + parts[1] + "/" + parts[2]);
    } else {
      factors.insert(r.emotion + "/" + r.factor);
      situations.insert(r.emotion + "/" + r.factor + "/" + r.situation);
    }
    ++stats.dialogues;
    for (const auto& u : r.dialogue.utterances()) {
      if (u.role == Role::kListener) ++stats.responses;
    }
  }
  stats.emotions = emotions.size();
  stats.factors = factors.size();
  stats.situations = situations.size();
  return stats;
}

json ResponseEntry::to_json() const {
  return {{"id", id}, {"record_id", record_id}, {"response", response}, {"history", history.to_json()}};
}

ResponseEntry ResponseEntry::from_json(const json& j) {
  ResponseEntry e;
  e.id = j.at("id").get<std::string>();
  e.record_id = j.value("record_id", e.id);
  e.response = j.at("response").get<std::string>();
  e.history = Dialogue::from_json(j.at("history"));
  return e;
}

std::vector<ResponseEntry> extract_responses(const std::filesystem::path& db_path) {
  std::vector<ResponseEntry> out;
  for (const auto& record : read_database(db_path)) {
    const auto& utts = record.dialogue.utterances();
    for (std::size_t i = 0; i < utts.size(); ++i) {
      if (utts[i].role != Role::kListener) continue;
      ResponseEntry e;
      e.id = record.id + "#" + std::to_string(i);
      e.record_id = record.id;
      e.response = utts[i].text;
      e.history = record.dialogue.first(i).with_id(e.id);
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<ResponseEntry> read_responses(const std::filesystem::path& responses_path) {
  std::vector<ResponseEntry> out;
  for (const auto& row : read_jsonl(responses_path)) out.push_back(ResponseEntry::from_json(row));
  return out;
}

}  // namespace aptness::apt
