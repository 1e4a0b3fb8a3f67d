#include <atomic>

#include "aptness/error.hpp"
#include "aptness/gateway.hpp"
#include "aptness/text.hpp"

namespace aptness::llm {

namespace {
std::atomic<bool> g_network_disabled{false};
}

void set_network_disabled(bool disabled) { g_network_disabled.store(disabled); }
bool network_disabled() { return g_network_disabled.load(); }

void ProviderConfig::validate() const {
  if (retry.max_attempts < 1) {
    throw Error(ErrorKind::kConfig, "provider '" + model_id + "': max_attempts must be >= 1");
  }
  if (!(timeout_seconds > 0.0)) {
    throw Error(ErrorKind::kConfig, "provider '" + model_id + "': timeout must be > 0");
  }
  if (model_id.empty()) {
    throw Error(ErrorKind::kConfig, "provider model id is empty");
  }
  if (kind == ProviderKind::kOpenAI && base_url.empty()) {
    throw Error(ErrorKind::kConfig, "provider '" + model_id + "': base_url is required");
  }
}

ChatRequest ChatRequest::user(std::string content, std::string task) {
  ChatRequest req;
  req.messages.push_back({"user", std::move(content)});
  req.task = std::move(task);
  return req;
}

json chat_wire_request(const ChatRequest& request, const ProviderConfig& cfg) {
  json messages = json::array();
  if (!request.system.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system}});
  }
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  json wire = {{"model", cfg.model_id},
               {"messages", std::move(messages)},
               {"temperature", request.temperature.value_or(cfg.sampling.temperature)},
               {"top_p", request.top_p.value_or(cfg.sampling.top_p)}};
  if (request.seed) wire["seed"] = *request.seed;
  return wire;
}

json embed_wire_request(const std::vector<std::string>& texts, const ProviderConfig& cfg) {
  return {{"model", cfg.model_id}, {"input", texts}};
}

std::string request_hash(const json& wire_request) {
  return hex64(fnv1a64(wire_request.dump()));
}

std::shared_ptr<ChatProvider> make_chat_provider(const ProviderConfig& cfg,
                                                 const GatewayOptions& options,
                                                 std::string_view fixture_tag) {
  cfg.validate();
  const bool replaying = !options.fixtures_dir.empty() && !options.record;
  if (replaying) {
    return std::make_shared<ReplayChatProvider>(
        record_replay(options.fixtures_dir, fixture_tag, FixtureStore::Mode::kReplay), cfg);
  }
  std::shared_ptr<ChatProvider> base;
  if (cfg.kind == ProviderKind::kMock) {
    base = std::make_shared<MockChatProvider>(cfg);
  } else {
    base = std::make_shared<OpenAIChatProvider>(cfg, make_http_transport());
  }
  if (!options.fixtures_dir.empty()) {
    return std::make_shared<RecordingChatProvider>(
        base, record_replay(options.fixtures_dir, fixture_tag, FixtureStore::Mode::kRecord), cfg);
  }
  return base;
}

std::shared_ptr<Embedder> make_embedder(const ProviderConfig& cfg, const GatewayOptions& options,
                                        std::string_view fixture_tag) {
  cfg.validate();
  const bool replaying = !options.fixtures_dir.empty() && !options.record;
  if (replaying) {
    return std::make_shared<ReplayEmbedder>(
        record_replay(options.fixtures_dir, fixture_tag, FixtureStore::Mode::kReplay), cfg);
  }
  std::shared_ptr<Embedder> base;
  if (cfg.kind == ProviderKind::kMock) {
    base = std::make_shared<MockEmbedder>(cfg.model_id, cfg.mock_dimension);
  } else {
    base = std::make_shared<OpenAIEmbedder>(cfg, make_http_transport());
  }
  if (!options.fixtures_dir.empty()) {
    return std::make_shared<RecordingEmbedder>(
        base, record_replay(options.fixtures_dir, fixture_tag, FixtureStore::Mode::kRecord), cfg);
  }
  return base;
}

}  // namespace aptness::llm
