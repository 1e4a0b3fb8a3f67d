#include "aptness/model.hpp"

#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness {

std::string_view to_string(Role role) {
  return role == Role::kSpeaker ? "speaker" : "listener";
}

Role parse_role(std::string_view s) {
  const auto key = normalize_key(s);
  if (key == "speaker" || key == "seeker" || key == "user" || key == "usr") {
    return Role::kSpeaker;
  }
  if (key == "listener" || key == "supporter" || key == "assistant" || key == "sys") {
    return Role::kListener;
  }
  throw Error(ErrorKind::kData, "unknown role '" + std::string(s) + "'");
}

Dialogue::Dialogue(std::string id, const std::vector<std::pair<Role, std::string>>& turns,
                   json meta)
    : id_(std::move(id)), meta_(meta.is_null() ? json::object() : std::move(meta)) {
  utterances_.reserve(turns.size());
  for (const auto& [role, text] : turns) {
    if (trim(text).empty()) {
      throw Error(ErrorKind::kData, "dialogue '" + id_ + "': empty utterance at index " +
                                        std::to_string(utterances_.size()));
    }
    utterances_.push_back(Utterance{role, text, utterances_.size()});
  }
}

Dialogue Dialogue::from_json(const json& j) {
  if (!j.is_object() || !j.contains("utterances") || !j["utterances"].is_array()) {
    throw Error(ErrorKind::kData, "dialogue object needs an 'utterances' array");
  }
  std::vector<std::pair<Role, std::string>> turns;
  for (const auto& u : j["utterances"]) {
    if (!u.contains("role") || !u.contains("text") || !u["text"].is_string()) {
      throw Error(ErrorKind::kData, "utterance needs 'role' and 'text'");
    }
    turns.emplace_back(parse_role(u["role"].get<std::string>()), u["text"].get<std::string>());
  }
  return Dialogue(j.value("id", std::string{}), turns, j.value("meta", json::object()));
}

json Dialogue::to_json() const {
  json utts = json::array();
  for (const auto& u : utterances_) {
    utts.push_back({{"role", std::string(aptness::to_string(u.role))}, {"text", u.text}});
  }
  return {{"id", id_}, {"utterances", std::move(utts)}, {"meta", meta_}};
}

Dialogue Dialogue::appended(Role role, std::string text) const {
  if (trim(text).empty()) {
    throw Error(ErrorKind::kData, "dialogue '" + id_ + "': empty utterance");
  }
  Dialogue out = *this;
  out.utterances_.push_back(Utterance{role, std::move(text), utterances_.size()});
  return out;
}

Dialogue Dialogue::first(std::size_t count) const {
  Dialogue out = *this;
  if (count < out.utterances_.size()) out.utterances_.resize(count);
  return out;
}

Dialogue Dialogue::with_id(std::string id) const {
  Dialogue out = *this;
  out.id_ = std::move(id);
  return out;
}

ValidationResult validate_dialogue(const Dialogue& d, bool require_query_ready) {
  ValidationResult result;
  const auto& utts = d.utterances();
  if (utts.empty()) {
    result.violations.push_back("empty dialogue");
    return result;
  }
  if (utts.front().role != Role::kSpeaker) {
    result.violations.push_back("does not begin with Speaker");
  }
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (utts[i].index != i) {
      result.violations.push_back("index mismatch at " + std::to_string(i));
    }
    if (trim(utts[i].text).empty()) {
      result.violations.push_back("empty text at index " + std::to_string(i));
    }
    if (i > 0 && utts[i].role == utts[i - 1].role) {
      result.violations.push_back("non-alternating at index " + std::to_string(i));
    }
  }
  if (require_query_ready && utts.back().role != Role::kSpeaker) {
    result.violations.push_back("ends with Listener");
  }
  return result;
}

std::size_t turn_count(const Dialogue& d) { return (d.size() + 1) / 2; }

Dialogue history_prefix(const Dialogue& d, std::size_t j) {
  const auto n = turn_count(d);
  if (j < 1 || j > n) {
    throw Error(ErrorKind::kRange, "turn " + std::to_string(j) + " out of range [1, " +
                                       std::to_string(n) + "] for dialogue '" + d.id() + "'");
  }
  return d.first(2 * j - 1);
}

std::string render_history(const Dialogue& d) {
  std::string out;
  for (const auto& u : d.utterances()) {
    if (!out.empty()) out.push_back('\n');
    out += u.role == Role::kSpeaker ? "Speaker: " : "Listener: ";
    out += u.text;
  }
  return out;
}

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::kExTES ? "extes" : "esconv";
}

Scheme parse_scheme(std::string_view s) {
  const auto key = normalize_key(s);
  if (key == "extes") return Scheme::kExTES;
  if (key == "esconv") return Scheme::kESConv;
  throw Error(ErrorKind::kConfig, "unknown strategy scheme '" + std::string(s) + "'");
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kGen: return "gen";
    case Mode::kRag: return "rag";
    case Mode::kAptness: return "aptness";
  }
  return "gen";
}

Mode parse_mode(std::string_view s) {
  const auto key = normalize_key(s);
  if (key == "gen") return Mode::kGen;
  if (key == "rag") return Mode::kRag;
  if (key == "aptness") return Mode::kAptness;
  throw Error(ErrorKind::kConfig, "unknown mode '" + std::string(s) + "'");
}

json to_json(const DraftResponse& d) {
  return {{"text", d.text},
          {"model_id", d.model_id},
          {"sampling", {{"temperature", d.sampling.temperature}, {"top_p", d.sampling.top_p}}}};
}

json to_json(const RetrievedExample& r) {
  return {{"id", r.record_id},
          {"response", r.response_text},
          {"history", r.history.to_json()},
          {"similarity", r.similarity},
          {"rank", r.rank}};
}

json to_json(const Provenance& p) {
  json retrieved = json::array();
  for (const auto& r : p.retrieved) retrieved.push_back(to_json(r));
  json strategies = json::array();
  for (const auto& s : p.strategies) {
    strategies.push_back({{"name", s.name}, {"definition", s.definition}});
  }
  return {{"draft", p.draft ? to_json(*p.draft) : json(nullptr)},
          {"retrieved", std::move(retrieved)},
          {"strategies", std::move(strategies)},
          {"strategy_fallback", p.strategy_fallback},
          {"greeting_fallbacks", p.greeting_fallbacks},
          {"unknown_strategy_names", p.unknown_strategy_names}};
}

json to_json(const FinalResponse& f) {
  return {{"text", f.text},
          {"mode", std::string(to_string(f.mode))},
          {"provenance", to_json(f.provenance)}};
}

DraftResponse draft_from_json(const json& j) {
  DraftResponse d;
  d.text = j.at("text").get<std::string>();
  d.model_id = j.value("model_id", std::string{});
  if (j.contains("sampling")) {
    d.sampling.temperature = j["sampling"].value("temperature", 0.95);
    d.sampling.top_p = j["sampling"].value("top_p", 0.7);
  }
  return d;
}

RetrievedExample retrieved_from_json(const json& j) {
  RetrievedExample r;
  r.record_id = j.at("id").get<std::string>();
  r.response_text = j.at("response").get<std::string>();
  r.history = Dialogue::from_json(j.at("history"));
  r.similarity = j.value("similarity", 0.0);
  r.rank = j.value("rank", 0);
  return r;
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  if (j.contains("draft") && !j["draft"].is_null()) p.draft = draft_from_json(j["draft"]);
  for (const auto& r : j.value("retrieved", json::array())) {
    p.retrieved.push_back(retrieved_from_json(r));
  }
  for (const auto& s : j.value("strategies", json::array())) {
    p.strategies.push_back({s.at("name").get<std::string>(), s.at("definition").get<std::string>()});
  }
  p.strategy_fallback = j.value("strategy_fallback", false);
  p.greeting_fallbacks = j.value("greeting_fallbacks", 0);
  p.unknown_strategy_names = j.value("unknown_strategy_names", 0);
  return p;
}

FinalResponse final_response_from_json(const json& j) {
  FinalResponse f;
  f.text = j.at("text").get<std::string>();
  f.mode = parse_mode(j.at("mode").get<std::string>());
  f.provenance = provenance_from_json(j.value("provenance", json::object()));
  return f;
}

}  // namespace aptness
