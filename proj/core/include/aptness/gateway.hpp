#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aptness/model.hpp"

// Every call to an external model service goes through this header: chat
// generation, embeddings, strategy prediction and judging. Nothing else in
// the library performs network I/O.
namespace aptness::llm {

using nlohmann::json;

class InFlightLimiter;

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

enum class ProviderKind { kOpenAI, kMock };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kMock;
  std::string base_url;
  std::string model_id = "mock-chat";
  // Name of the environment variable that holds the API key. Keys are never
  // stored in config files.
  std::string api_key_env;
  double timeout_seconds = 60.0;
  RetryPolicy retry;
  Sampling sampling;
  int max_in_flight = 4;
  int embed_batch_size = 64;
  int mock_dimension = 64;

  // Throws kConfig when max_attempts < 1 or timeout <= 0.
  void validate() const;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string system;
  std::vector<ChatMessage> messages;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<std::uint64_t> seed;
  // Neither sent on the wire nor hashed. The offline mock uses these to shape
  // its output like the real task would (a list, a dialogue, six scores...).
  std::string task;
  std::map<std::string, std::string> hints;

  static ChatRequest user(std::string content, std::string task = {});
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResult {
  std::string text;
  Usage usage;
  double latency_ms = 0.0;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResult chat(const ChatRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  // One vector per text, all of one dimension. Throws kPrecondition on an
  // empty list.
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string model_id() const = 0;
};

// OpenAI-style request bodies with sampling resolved against the config.
json chat_wire_request(const ChatRequest& request, const ProviderConfig& cfg);
json embed_wire_request(const std::vector<std::string>& texts, const ProviderConfig& cfg);
// Platform-independent hash of a wire body (16 hex digits).
std::string request_hash(const json& wire_request);

// --- transport -------------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws kTransport on connection failure or timeout; HTTP error statuses
  // are returned, not thrown.
  virtual HttpResponse post_json(const std::string& url,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 const std::string& body, double timeout_seconds) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

// Process-wide kill switch for outbound HTTP (the --no-network flag).
void set_network_disabled(bool disabled);
bool network_disabled();

using SleepFn = std::function<void(std::chrono::milliseconds)>;

// Calls `attempt` until it succeeds, the error is non-retryable, or the
// policy's attempt budget is spent. Transport errors are retryable.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, const SleepFn& sleep, Fn&& attempt)
    -> decltype(attempt());

// --- OpenAI-dialect clients -----------------------------------------------

class OpenAIChatProvider : public ChatProvider {
 public:
  OpenAIChatProvider(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport,
                     SleepFn sleep = {});
  ChatResult chat(const ChatRequest& request) override;
  std::string model_id() const override { return cfg_.model_id; }
  int attempts() const noexcept { return attempts_.load(); }

 private:
  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  SleepFn sleep_;
  std::atomic<int> attempts_{0};
  std::shared_ptr<InFlightLimiter> limiter_;
};

class OpenAIEmbedder : public Embedder {
 public:
  OpenAIEmbedder(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport,
                 SleepFn sleep = {});
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
  std::string model_id() const override { return cfg_.model_id; }

 private:
  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
  SleepFn sleep_;
};

// --- offline mocks ----------------------------------------------------------

// Deterministic function of (wire request, task hints). Output is shaped per
// task so that every pipeline stage can run offline end to end.
class MockChatProvider : public ChatProvider {
 public:
  explicit MockChatProvider(ProviderConfig cfg = {});
  ChatResult chat(const ChatRequest& request) override;
  std::string model_id() const override { return cfg_.model_id; }
  int calls() const noexcept { return calls_.load(); }

 private:
  ProviderConfig cfg_;
  std::atomic<int> calls_{0};
};

// Seeded pseudo-random unit vectors keyed by a hash of the text.
class MockEmbedder : public Embedder {
 public:
  explicit MockEmbedder(std::string model_id = "mock-embed", int dimension = 64);
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
  std::string model_id() const override { return model_id_; }
  int dimension() const noexcept { return dimension_; }

  static std::vector<float> vector_for(std::string_view model_id, std::string_view text,
                                       int dimension);

 private:
  std::string model_id_;
  int dimension_;
};

// --- record / replay ----------------------------------------------------------

// A .jsonl file of {request_hash, request, response}. Record mode appends
// new pairs; replay mode only reads.
class FixtureStore {
 public:
  enum class Mode { kRecord, kReplay };

  FixtureStore(std::filesystem::path file, Mode mode);

  Mode mode() const noexcept { return mode_; }
  const std::filesystem::path& file() const noexcept { return file_; }
  std::optional<json> find(const std::string& hash) const;
  // Throws kReplay naming the hash when absent.
  json require(const std::string& hash) const;
  void put(const std::string& hash, const json& request, const json& response);
  std::size_t size() const;

 private:
  std::filesystem::path file_;
  Mode mode_;
  mutable std::mutex mu_;
  std::map<std::string, json> entries_;
};

// Handle for one fixture session: <dir>/<tag>.jsonl.
std::shared_ptr<FixtureStore> record_replay(const std::filesystem::path& dir,
                                            std::string_view tag, FixtureStore::Mode mode);

class RecordingChatProvider : public ChatProvider {
 public:
  RecordingChatProvider(std::shared_ptr<ChatProvider> inner, std::shared_ptr<FixtureStore> store,
                        ProviderConfig cfg);
  ChatResult chat(const ChatRequest& request) override;
  std::string model_id() const override { return cfg_.model_id; }

 private:
  std::shared_ptr<ChatProvider> inner_;
  std::shared_ptr<FixtureStore> store_;
  ProviderConfig cfg_;
};

class ReplayChatProvider : public ChatProvider {
 public:
  ReplayChatProvider(std::shared_ptr<FixtureStore> store, ProviderConfig cfg);
  ChatResult chat(const ChatRequest& request) override;
  std::string model_id() const override { return cfg_.model_id; }

 private:
  std::shared_ptr<FixtureStore> store_;
  ProviderConfig cfg_;
};

class RecordingEmbedder : public Embedder {
 public:
  RecordingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<FixtureStore> store,
                    ProviderConfig cfg);
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
  std::string model_id() const override { return cfg_.model_id; }

 private:
  std::shared_ptr<Embedder> inner_;
  std::shared_ptr<FixtureStore> store_;
  ProviderConfig cfg_;
};

class ReplayEmbedder : public Embedder {
 public:
  ReplayEmbedder(std::shared_ptr<FixtureStore> store, ProviderConfig cfg);
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;
  std::string model_id() const override { return cfg_.model_id; }

 private:
  std::shared_ptr<FixtureStore> store_;
  ProviderConfig cfg_;
};

// --- wiring -------------------------------------------------------------------

struct GatewayOptions {
  bool no_network = false;
  // When set, providers are wrapped for record (record = true) or replay.
  std::filesystem::path fixtures_dir;
  bool record = false;
};

std::shared_ptr<ChatProvider> make_chat_provider(const ProviderConfig& cfg,
                                                 const GatewayOptions& options,
                                                 std::string_view fixture_tag);
std::shared_ptr<Embedder> make_embedder(const ProviderConfig& cfg, const GatewayOptions& options,
                                        std::string_view fixture_tag);

}  // namespace aptness::llm

#include "aptness/detail/retry.inl"
