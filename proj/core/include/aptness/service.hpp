#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/config.hpp"
#include "aptness/gateway.hpp"
#include "aptness/model.hpp"
#include "aptness/pipeline.hpp"
#include "aptness/prompt.hpp"
#include "aptness/retrieval.hpp"
#include "aptness/strategy.hpp"

namespace aptness::service {

// Shared, read-only after startup. Anything missing narrows the modes a
// session may use.
struct Resources {
  std::shared_ptr<llm::ChatProvider> chat;
  std::shared_ptr<llm::Embedder> embedder;
  std::shared_ptr<const retrieval::VectorIndex> index;
  std::map<Scheme, std::shared_ptr<const strategy::StrategyCatalog>> catalogs;
  std::shared_ptr<strategy::Predictor> predictor;
  std::shared_ptr<const prompt::PromptTemplates> templates;
  pipeline::PipelineConfig defaults;
};

struct SessionSnapshot {
  std::string id;
  Dialogue dialogue;
  pipeline::PipelineConfig config;
  std::vector<FinalResponse> turns;  // one per Listener utterance
  std::string created_at;
  std::string last_active;

  nlohmann::json to_json() const;
};

// In-memory chat sessions. A post appends the Speaker message and the
// generated Listener reply together or not at all; posts on one session are
// serialised (a concurrent one gets kBusy). An optional append-only journal
// lets a restarted manager recover its transcripts.
class SessionManager {
 public:
  explicit SessionManager(Resources resources, std::filesystem::path journal = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  // Overrides: {"mode", "k", "scheme"}. Bad values are kRequest; a mode
  // whose index or catalog is not loaded is kConflict.
  std::string create(const nlohmann::json& overrides = nlohmann::json::object());
  // kNotFound, kBusy, kRequest (empty text); pipeline failures propagate
  // with the session unchanged.
  FinalResponse post_message(const std::string& id, const std::string& text);
  SessionSnapshot get(const std::string& id) const;

  std::size_t size() const;
  std::vector<Mode> available_modes(Scheme scheme) const;
  const Resources& resources() const noexcept { return resources_; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void journal_append(const nlohmann::json& row);
  void replay_journal();
  pipeline::PipelineConfig effective_config(const nlohmann::json& overrides) const;

  Resources resources_;
  std::filesystem::path journal_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex journal_mu_;
};

// HTTP JSON API over a SessionManager.
//   POST /v1/sessions                 -> 201 {id, config, created_at}
//   POST /v1/sessions/{id}/messages   -> 200 {text, mode, provenance, turn}
//   GET  /v1/sessions/{id}            -> 200 snapshot
//   GET  /v1/health, GET /v1/config
// Errors: {"error": {"kind", "message"}} with 400/404/409/502.
class HttpService {
 public:
  HttpService(SessionManager& sessions, ServiceSettings settings,
              nlohmann::json config_view = nlohmann::json::object());
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Binds (port 0 picks a free port) and returns the bound port; throws
  // kConfig when binding fails.
  int bind();
  // Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aptness::service
