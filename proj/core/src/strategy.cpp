#include "aptness/strategy.hpp"

#include <cctype>
#include <set>

#include <spdlog/spdlog.h>

#include "aptness/data.hpp"
#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness::strategy {

using nlohmann::json;

namespace {

std::size_t expected_size(Scheme scheme) { return scheme == Scheme::kExTES ? 18 : 8; }

std::string multi_rule(Scheme scheme) {
  return scheme == Scheme::kExTES
             ? "Choose exactly one strategy."
             : "Choose one or more strategies; separate several names with semicolons.";
}

std::string template_or_default(std::string prompt_template) {
  return prompt_template.empty() ? data::load_template("strategy_sft") : prompt_template;
}

std::string strip_decoration(std::string s) {
  s = trim(s);
  for (std::string_view label : {"strategies:", "strategy:"}) {
    if (starts_with_icase(s, label)) {
      s = trim(std::string_view(s).substr(label.size()));
      break;
    }
  }
  std::size_t i = 0;
  while (i < s.size() && (s[i] == '-' || s[i] == '*' || s[i] == '[' || s[i] == '"' || s[i] == ' ' ||
                          s[i] == '\'' || std::isdigit(static_cast<unsigned char>(s[i])) ||
                          (i > 0 && (s[i] == '.' || s[i] == ')') &&
                           std::isdigit(static_cast<unsigned char>(s[i - 1]))))) {
    ++i;
  }
  s = trim(std::string_view(s).substr(i));
  while (!s.empty() && (s.back() == '.' || s.back() == ']' || s.back() == '"' || s.back() == '\'')) {
    s.pop_back();
  }
  return trim(s);
}

}  // namespace

StrategyCatalog StrategyCatalog::from_json(const json& j) {
  StrategyCatalog c;
  c.scheme_ = parse_scheme(j.at("scheme").get<std::string>());
  std::set<std::string> seen;
  for (const auto& e : j.at("entries")) {
    CatalogEntry entry{trim(e.at("name").get<std::string>()),
                       trim(e.at("definition").get<std::string>())};
    if (entry.name.empty() || entry.definition.empty()) {
      throw Error(ErrorKind::kData, "catalog entry with empty name or definition");
    }
    if (!seen.insert(normalize_key(entry.name)).second) {
      throw Error(ErrorKind::kData, "catalog lists '" + entry.name + "' twice");
    }
    c.entries_.push_back(std::move(entry));
  }
  if (seen.count(normalize_key(kGreetings)) == 0) {
    throw Error(ErrorKind::kData, "catalog has no 'Greetings' entry");
  }
  if (c.entries_.size() != expected_size(c.scheme_)) {
    throw Error(ErrorKind::kData, std::string(to_string(c.scheme_)) + " catalog must have " +
                                      std::to_string(expected_size(c.scheme_)) + " entries, found " +
                                      std::to_string(c.entries_.size()));
  }
  return c;
}

StrategyCatalog StrategyCatalog::load(const std::filesystem::path& path) {
  return from_json(json::parse(read_file(path)));
}

StrategyCatalog StrategyCatalog::shipped(Scheme scheme) {
  return from_json(json::parse(data::load("catalogs/" + std::string(to_string(scheme)) + ".json")));
}

std::optional<std::size_t> StrategyCatalog::find(std::string_view name) const {
  auto key = normalize_key(name);
  if (key == "others" || key == "other") key = normalize_key(kGreetings);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (normalize_key(entries_[i].name) == key) return i;
  }
  return std::nullopt;
}

std::vector<std::string> StrategyCatalog::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::string build_strategy_prompt(const Dialogue& history, const StrategyCatalog& catalog,
                                  const std::string& prompt_template) {
  std::string definitions;
  for (const auto& e : catalog.entries()) {
    definitions += "- " + e.name + ": " + e.definition + "\n";
  }
  if (!definitions.empty()) definitions.pop_back();
  auto prompt = render_template(prompt_template, {{"definitions", definitions},
                                                  {"multi_rule", multi_rule(catalog.scheme())},
                                                  {"dialogue", render_history(history)}});
  while (!prompt.empty() && (prompt.back() == '\n' || prompt.back() == ' ')) prompt.pop_back();
  return prompt;
}

namespace {
llm::ChatRequest strategy_request(const Dialogue& history, const StrategyCatalog& catalog,
                                  const std::string& tmpl) {
  auto req = llm::ChatRequest::user(build_strategy_prompt(history, catalog, tmpl), "strategy");
  std::string candidates;
  for (const auto& e : catalog.entries()) candidates += e.name + "\n";
  req.hints["candidates"] = candidates;
  req.hints["multi"] = catalog.scheme() == Scheme::kESConv ? "1" : "0";
  return req;
}
}  // namespace

PromptPredictor::PromptPredictor(llm::ChatProvider& provider, std::string prompt_template)
    : provider_(provider), template_(template_or_default(std::move(prompt_template))) {}

std::string PromptPredictor::predict_raw(const Dialogue& history, const StrategyCatalog& catalog) {
  auto req = strategy_request(history, catalog, template_);
  req.system = "You label emotional support strategies. Reply with strategy names only.";
  return provider_.chat(req).text;
}

EndpointPredictor::EndpointPredictor(llm::ChatProvider& provider, std::string prompt_template)
    : provider_(provider), template_(template_or_default(std::move(prompt_template))) {}

std::string EndpointPredictor::predict_raw(const Dialogue& history,
                                           const StrategyCatalog& catalog) {
  auto req = strategy_request(history, catalog, template_);
  req.temperature = 0.0;
  return provider_.chat(req).text;
}

TablePredictor::TablePredictor(std::map<std::string, std::string> answers,
                               std::string fallback_answer)
    : answers_(std::move(answers)), fallback_(std::move(fallback_answer)) {}

std::string TablePredictor::predict_raw(const Dialogue& history, const StrategyCatalog&) {
  if (!history.empty()) {
    if (auto it = answers_.find(history.back().text); it != answers_.end()) return it->second;
  }
  return fallback_;
}

std::vector<std::string> parse_strategy_names(std::string_view raw) {
  std::vector<std::string> out;
  for (auto& piece : split_any(raw, ",;\n")) {
    auto name = strip_decoration(piece);
    if (!name.empty()) out.push_back(std::move(name));
  }
  return out;
}

StrategyPrediction predict(const Dialogue& history, const StrategyCatalog& catalog,
                           Predictor& predictor) {
  if (!validate_dialogue(history, true).ok()) {
    throw Error(ErrorKind::kPrecondition,
                "strategy prediction needs a query-ready history ('" + history.id() + "')");
  }
  std::string raw;
  try {
    raw = predictor.predict_raw(history, catalog);
  } catch (const Error& e) {
    throw Error(ErrorKind::kPrediction, "strategy predictor failed: " + std::string(e.what()));
  }

  StrategyPrediction prediction;
  prediction.history_id = history.id();
  std::set<std::size_t> taken;
  for (const auto& name : parse_strategy_names(raw)) {
    const auto idx = catalog.find(name);
    if (!idx) {
      prediction.unknown_names.push_back(name);
      continue;
    }
    if (!taken.insert(*idx).second) continue;
    prediction.strategies.push_back({catalog.entries()[*idx].name, catalog.scheme()});
    if (catalog.scheme() == Scheme::kExTES) break;
  }
  if (!prediction.unknown_names.empty()) {
    spdlog::warn("dropped {} unknown strategy name(s) for history '{}'",
                 prediction.unknown_names.size(), history.id());
  }
  if (prediction.strategies.empty()) {
    prediction.fallback = true;
    prediction.strategies.push_back({std::string(kGreetings), catalog.scheme()});
  }
  return prediction;
}

std::vector<std::string> dedup_ordered(const std::vector<StrategyPrediction>& predictions) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : predictions) {
    for (const auto& s : p.strategies) {
      if (seen.insert(s.name).second) out.push_back(s.name);
    }
  }
  return out;
}

std::vector<StrategyUse> definitions_for(const std::vector<std::string>& names,
                                         const StrategyCatalog& catalog) {
  std::vector<StrategyUse> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    const auto idx = catalog.find(name);
    if (!idx) {
      throw Error(ErrorKind::kData, "internal: strategy '" + name + "' missing from catalog");
    }
    out.push_back({catalog.entries()[*idx].name, catalog.entries()[*idx].definition});
  }
  return out;
}

}  // namespace aptness::strategy
