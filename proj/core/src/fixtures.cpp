#include <fstream>

#include "aptness/error.hpp"
#include "aptness/gateway.hpp"
#include "aptness/text.hpp"

namespace aptness::llm {

FixtureStore::FixtureStore(std::filesystem::path file, Mode mode)
    : file_(std::move(file)), mode_(mode) {
  const bool exists = std::filesystem::exists(file_);
  if (mode_ == Mode::kReplay && !exists) {
    throw Error(ErrorKind::kReplay, "fixture file " + file_.string() + " does not exist");
  }
  if (exists) {
    for (auto& row : read_jsonl(file_)) {
      auto hash = row.at("request_hash").get<std::string>();
      entries_[hash] = std::move(row);
    }
  } else if (file_.has_parent_path()) {
    std::filesystem::create_directories(file_.parent_path());
  }
}

std::optional<json> FixtureStore::find(const std::string& hash) const {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(hash); it != entries_.end()) {
    return std::optional<json>(std::in_place, it->second.at("response"));
  }
  return std::nullopt;
}

json FixtureStore::require(const std::string& hash) const {
  if (auto found = find(hash)) return *found;
  throw Error(ErrorKind::kReplay,
              "no recorded response for request " + hash + " in " + file_.string());
}

void FixtureStore::put(const std::string& hash, const json& request, const json& response) {
  if (mode_ != Mode::kRecord) {
    throw Error(ErrorKind::kReplay, "fixture store " + file_.string() + " is read-only");
  }
  std::lock_guard lock(mu_);
  if (entries_.count(hash) != 0) return;
  json row = {{"request_hash", hash}, {"request", request}, {"response", response}};
  std::ofstream out(file_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::kData, "cannot append to " + file_.string());
  out << row.dump() << '\n';
  entries_.emplace(hash, std::move(row));
}

std::size_t FixtureStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::shared_ptr<FixtureStore> record_replay(const std::filesystem::path& dir,
                                            std::string_view tag, FixtureStore::Mode mode) {
  return std::make_shared<FixtureStore>(dir / (std::string(tag) + ".jsonl"), mode);
}

namespace {

json chat_result_json(const ChatResult& r) {
  return {{"text", r.text},
          {"usage",
           {{"prompt_tokens", r.usage.prompt_tokens},
            {"completion_tokens", r.usage.completion_tokens}}}};
}

ChatResult chat_result_from(const json& j) {
  ChatResult r;
  r.text = j.at("text").get<std::string>();
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return r;
}

}  // namespace

RecordingChatProvider::RecordingChatProvider(std::shared_ptr<ChatProvider> inner,
                                             std::shared_ptr<FixtureStore> store,
                                             ProviderConfig cfg)
    : inner_(std::move(inner)), store_(std::move(store)), cfg_(std::move(cfg)) {}

ChatResult RecordingChatProvider::chat(const ChatRequest& request) {
  const json wire = chat_wire_request(request, cfg_);
  const std::string hash = request_hash(wire);
  if (auto found = store_->find(hash)) return chat_result_from(*found);
  auto result = inner_->chat(request);
  store_->put(hash, wire, chat_result_json(result));
  return result;
}

ReplayChatProvider::ReplayChatProvider(std::shared_ptr<FixtureStore> store, ProviderConfig cfg)
    : store_(std::move(store)), cfg_(std::move(cfg)) {}

ChatResult ReplayChatProvider::chat(const ChatRequest& request) {
  return chat_result_from(store_->require(request_hash(chat_wire_request(request, cfg_))));
}

RecordingEmbedder::RecordingEmbedder(std::shared_ptr<Embedder> inner,
                                     std::shared_ptr<FixtureStore> store, ProviderConfig cfg)
    : inner_(std::move(inner)), store_(std::move(store)), cfg_(std::move(cfg)) {}

std::vector<std::vector<float>> RecordingEmbedder::embed(const std::vector<std::string>& texts) {
  const json wire = embed_wire_request(texts, cfg_);
  const std::string hash = request_hash(wire);
  if (auto found = store_->find(hash)) {
    return found->at("vectors").get<std::vector<std::vector<float>>>();
  }
  auto vectors = inner_->embed(texts);
  store_->put(hash, wire, json{{"vectors", vectors}});
  return vectors;
}

ReplayEmbedder::ReplayEmbedder(std::shared_ptr<FixtureStore> store, ProviderConfig cfg)
    : store_(std::move(store)), cfg_(std::move(cfg)) {}

std::vector<std::vector<float>> ReplayEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) {
    throw Error(ErrorKind::kPrecondition, "embed called with no texts");
  }
  return store_->require(request_hash(embed_wire_request(texts, cfg_)))
      .at("vectors")
      .get<std::vector<std::vector<float>>>();
}

}  // namespace aptness::llm
