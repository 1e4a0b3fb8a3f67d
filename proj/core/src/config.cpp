#include "aptness/config.hpp"

#include <cctype>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "aptness/error.hpp"
#include "aptness/text.hpp"

namespace aptness {

namespace pt = boost::property_tree;

namespace {

// Dots separate ptree path segments, so sections like "provider.chat" are
// looked up with an explicit '/' separator.
template <typename T>
T get_or(const pt::ptree& tree, const std::string& section, const std::string& key, T fallback) {
  const pt::ptree::path_type path(section + "/" + key, '/');
  auto raw = tree.get_optional<std::string>(path);
  if (!raw) return fallback;
  // Inline comments: ";" at the start or after whitespace.
  for (std::size_t i = 0; i < raw->size(); ++i) {
    if ((*raw)[i] == ';' && (i == 0 || std::isspace(static_cast<unsigned char>((*raw)[i - 1])))) {
      raw->resize(i);
      break;
    }
  }
  if constexpr (std::is_same_v<T, std::string>) {
    return trim(*raw);
  } else {
    std::istringstream in(trim(*raw));
    T value{};
    in >> value;
    if (in.fail() || !in.eof()) {
      throw Error(ErrorKind::kConfig, "[" + section + "] " + key + ": bad value '" + *raw + "'");
    }
    return value;
  }
}

llm::ProviderConfig read_provider(const pt::ptree& tree, const std::string& section,
                                  llm::ProviderConfig cfg) {
  const auto kind = to_lower(get_or<std::string>(tree, section, "kind", "mock"));
  if (kind == "mock") {
    cfg.kind = llm::ProviderKind::kMock;
  } else if (kind == "openai") {
    cfg.kind = llm::ProviderKind::kOpenAI;
  } else {
    throw Error(ErrorKind::kConfig, "[" + section + "] kind: expected mock or openai");
  }
  cfg.base_url = get_or(tree, section, "base_url", cfg.base_url);
  cfg.model_id = get_or(tree, section, "model", cfg.model_id);
  cfg.api_key_env = get_or(tree, section, "api_key_env", cfg.api_key_env);
  cfg.timeout_seconds = get_or(tree, section, "timeout", cfg.timeout_seconds);
  cfg.retry.max_attempts = get_or(tree, section, "max_attempts", cfg.retry.max_attempts);
  cfg.retry.initial_backoff = std::chrono::milliseconds(
      get_or<long long>(tree, section, "backoff_ms", cfg.retry.initial_backoff.count()));
  cfg.sampling.temperature = get_or(tree, section, "temperature", cfg.sampling.temperature);
  cfg.sampling.top_p = get_or(tree, section, "top_p", cfg.sampling.top_p);
  cfg.max_in_flight = get_or(tree, section, "max_in_flight", cfg.max_in_flight);
  cfg.embed_batch_size = get_or(tree, section, "batch_size", cfg.embed_batch_size);
  cfg.mock_dimension = get_or(tree, section, "dimension", cfg.mock_dimension);
  if (cfg.kind == llm::ProviderKind::kOpenAI && cfg.base_url.empty()) {
    throw Error(ErrorKind::kConfig, "[" + section + "] base_url is required for openai");
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, "[" + section + "] " + e.what());
  }
  return cfg;
}

}  // namespace

AppConfig AppConfig::defaults() {
  AppConfig c;
  c.chat.model_id = "mock-chat";
  c.embed.model_id = "mock-embed";
  c.judge.model_id = "mock-judge";
  c.strategy.model_id = "mock-strategy";
  return c;
}

AppConfig AppConfig::parse(const std::string& ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  AppConfig c = defaults();
  c.chat = read_provider(tree, "provider.chat", c.chat);
  c.embed = read_provider(tree, "provider.embed", c.embed);
  c.judge = read_provider(tree, "provider.judge", c.judge);
  c.strategy = read_provider(tree, "provider.strategy", c.strategy);
  c.judge_temperature = get_or(tree, "provider.judge", "temperature", 0.0);

  const auto predictor = to_lower(get_or<std::string>(tree, "provider.strategy", "predictor", "prompt"));
  if (predictor == "prompt") {
    c.predictor = PredictorKind::kPrompt;
  } else if (predictor == "endpoint") {
    c.predictor = PredictorKind::kEndpoint;
  } else {
    throw Error(ErrorKind::kConfig, "[provider.strategy] predictor: expected prompt or endpoint");
  }

  nlohmann::json p = nlohmann::json::object();
  if (auto v = get_or<std::string>(tree, "pipeline", "mode", ""); !v.empty()) p["mode"] = v;
  if (auto v = get_or<std::string>(tree, "pipeline", "scheme", ""); !v.empty()) p["scheme"] = v;
  if (auto v = get_or<std::string>(tree, "pipeline", "query_source", ""); !v.empty()) {
    p["query_source"] = v;
  }
  p["k"] = get_or<long long>(tree, "pipeline", "k", 2);
  p["max_history_chars"] = get_or<std::size_t>(tree, "pipeline", "max_history_chars", 8000);
  p["temperature"] = c.chat.sampling.temperature;
  p["top_p"] = c.chat.sampling.top_p;
  try {
    c.pipeline = pipeline::PipelineConfig::from_json(p);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, std::string("[pipeline] ") + e.what());
  }

  c.index_dir = get_or<std::string>(tree, "paths", "index", "");
  c.catalog = get_or<std::string>(tree, "paths", "catalog", "");
  c.data_dir = get_or<std::string>(tree, "paths", "data_dir", "");

  c.service.host = get_or(tree, "service", "host", c.service.host);
  c.service.port = get_or(tree, "service", "port", c.service.port);
  c.service.cors_origin = get_or(tree, "service", "cors_origin", c.service.cors_origin);
  c.service.journal = get_or<std::string>(tree, "service", "journal", "");
  if (c.service.port < 0 || c.service.port > 65535) {
    throw Error(ErrorKind::kConfig, "[service] port out of range");
  }
  return c;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, std::string("cannot read config: ") + e.what());
  }
  auto c = parse(text);
  // Relative paths in the file are relative to the file.
  const auto base = path.parent_path();
  for (auto* p : {&c.index_dir, &c.catalog, &c.data_dir, &c.service.journal}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

nlohmann::json AppConfig::to_json() const {
  auto provider = [](const llm::ProviderConfig& p) {
    return nlohmann::json{{"kind", p.kind == llm::ProviderKind::kMock ? "mock" : "openai"},
                          {"model", p.model_id},
                          {"base_url", p.base_url},
                          {"api_key_env", p.api_key_env},
                          {"timeout", p.timeout_seconds},
                          {"max_attempts", p.retry.max_attempts}};
  };
  return {{"pipeline", pipeline.to_json()},
          {"providers",
           {{"chat", provider(chat)},
            {"embed", provider(embed)},
            {"judge", provider(judge)},
            {"strategy", provider(strategy)}}},
          {"judge_temperature", judge_temperature},
          {"predictor", predictor == PredictorKind::kPrompt ? "prompt" : "endpoint"}};
}

}  // namespace aptness
