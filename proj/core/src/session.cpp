#include <algorithm>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "aptness/error.hpp"
#include "aptness/service.hpp"
#include "aptness/text.hpp"

namespace aptness::service {

struct SessionManager::Session {
  mutable std::mutex mu;
  bool busy = false;
  SessionSnapshot state;
};

namespace {

std::string new_session_id() {
  static std::mutex mu;
  static SplitMix64 rng{std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32)};
  std::lock_guard lock(mu);
  return "s-" + hex64(rng.next());
}

}  // namespace

nlohmann::json SessionSnapshot::to_json() const {
  nlohmann::json turns_json = nlohmann::json::array();
  for (const auto& t : turns) turns_json.push_back(aptness::to_json(t));
  return {{"id", id},
          {"dialogue", dialogue.to_json()},
          {"config", config.to_json()},
          {"provenance", turns_json},
          {"created_at", created_at},
          {"last_active", last_active}};
}

SessionManager::SessionManager(Resources resources, std::filesystem::path journal)
    : resources_(std::move(resources)), journal_(std::move(journal)) {
  if (!resources_.chat || !resources_.templates) {
    throw Error(ErrorKind::kConfig, "session manager needs a chat provider and templates");
  }
  if (!journal_.empty()) replay_journal();
}

SessionManager::~SessionManager() = default;

std::vector<Mode> SessionManager::available_modes(Scheme scheme) const {
  std::vector<Mode> modes{Mode::kGen};
  if (resources_.index && resources_.embedder) {
    modes.push_back(Mode::kRag);
    if (resources_.catalogs.count(scheme) && resources_.predictor) modes.push_back(Mode::kAptness);
  }
  return modes;
}

pipeline::PipelineConfig SessionManager::effective_config(const nlohmann::json& overrides) const {
  if (!overrides.is_object()) throw Error(ErrorKind::kRequest, "session overrides must be an object");
  auto merged = resources_.defaults.to_json();
  for (const auto& key : {"mode", "k", "scheme"}) {
    if (overrides.contains(key)) merged[key] = overrides.at(key);
  }
  pipeline::PipelineConfig cfg;
  try {
    cfg = pipeline::PipelineConfig::from_json(merged);
  } catch (const Error& e) {
    throw Error(ErrorKind::kRequest, e.what());
  }
  const auto modes = available_modes(cfg.scheme);
  if (std::find(modes.begin(), modes.end(), cfg.mode) == modes.end()) {
    throw Error(ErrorKind::kConflict,
                "mode " + std::string(to_string(cfg.mode)) + " is not available: " +
                    (cfg.mode == Mode::kRag || !resources_.index ? "no index loaded"
                                                                 : "no strategy catalog loaded"));
  }
  return cfg;
}

std::string SessionManager::create(const nlohmann::json& overrides) {
  auto session = std::make_shared<Session>();
  session->state.config = effective_config(overrides);
  session->state.id = new_session_id();
  session->state.dialogue = Dialogue(session->state.id, {});
  session->state.created_at = retrieval::utc_timestamp_now();
  session->state.last_active = session->state.created_at;
  {
    std::lock_guard lock(mu_);
    sessions_[session->state.id] = session;
  }
  journal_append({{"op", "create"},
                  {"id", session->state.id},
                  {"config", session->state.config.to_json()},
                  {"at", session->state.created_at}});
  return session->state.id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorKind::kNotFound, "unknown session " + id);
  return it->second;
}

FinalResponse SessionManager::post_message(const std::string& id, const std::string& text) {
  auto session = find(id);
  const auto clean = trim(text);
  if (clean.empty()) throw Error(ErrorKind::kRequest, "message text is empty");

  Dialogue history;
  pipeline::PipelineConfig config;
  {
    std::lock_guard lock(session->mu);
    if (session->busy) throw Error(ErrorKind::kBusy, "session " + id + " is handling a message");
    session->busy = true;
    history = session->state.dialogue.appended(Role::kSpeaker, clean);
    config = session->state.config;
  }
  // The Speaker message only becomes visible together with the reply.
  FinalResponse response;
  try {
    std::unique_ptr<retrieval::IndexRetriever> retriever;
    if (resources_.index && resources_.embedder) {
      retriever = std::make_unique<retrieval::IndexRetriever>(*resources_.index, *resources_.embedder);
    }
    pipeline::PipelineDeps deps;
    deps.chat = resources_.chat.get();
    deps.retriever = retriever.get();
    if (auto it = resources_.catalogs.find(config.scheme); it != resources_.catalogs.end()) {
      deps.catalog = it->second.get();
    }
    deps.predictor = resources_.predictor.get();
    deps.templates = resources_.templates.get();
    response = pipeline::run_pipeline(history, config, deps);
  } catch (...) {
    std::lock_guard lock(session->mu);
    session->busy = false;
    throw;
  }
  const auto now = retrieval::utc_timestamp_now();
  {
    std::lock_guard lock(session->mu);
    session->state.dialogue = history.appended(Role::kListener, response.text);
    session->state.turns.push_back(response);
    session->state.last_active = now;
    session->busy = false;
  }
  journal_append({{"op", "exchange"},
                  {"id", id},
                  {"speaker", clean},
                  {"response", aptness::to_json(response)},
                  {"at", now}});
  return response;
}

SessionSnapshot SessionManager::get(const std::string& id) const {
  auto session = find(id);
  std::lock_guard lock(session->mu);
  return session->state;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void SessionManager::journal_append(const nlohmann::json& row) {
  if (journal_.empty()) return;
  std::lock_guard lock(journal_mu_);
  std::ofstream out(journal_, std::ios::app | std::ios::binary);
  out << row.dump() << '\n';
  out.flush();
  if (!out) spdlog::error("journal write failed: {}", journal_.string());
}

void SessionManager::replay_journal() {
  if (!std::filesystem::exists(journal_)) return;
  std::size_t restored = 0;
  for (const auto& row : read_jsonl(journal_)) {
    const auto op = row.value("op", "");
    const auto id = row.value("id", "");
    if (op == "create") {
      auto s = std::make_shared<Session>();
      s->state.id = id;
      s->state.config = pipeline::PipelineConfig::from_json(row.at("config"));
      s->state.dialogue = Dialogue(id, {});
      s->state.created_at = row.value("at", "");
      s->state.last_active = s->state.created_at;
      sessions_[id] = s;
      ++restored;
    } else if (op == "exchange") {
      auto it = sessions_.find(id);
      if (it == sessions_.end()) {
        throw Error(ErrorKind::kData, "journal exchange for unknown session " + id);
      }
      auto& st = it->second->state;
      auto response = final_response_from_json(row.at("response"));
      st.dialogue = st.dialogue.appended(Role::kSpeaker, row.at("speaker").get<std::string>())
                        .appended(Role::kListener, response.text);
      st.turns.push_back(std::move(response));
      st.last_active = row.value("at", st.last_active);
    }
  }
  spdlog::info("restored {} session(s) from {}", restored, journal_.string());
}

}  // namespace aptness::service
