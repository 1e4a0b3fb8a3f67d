#include <chrono>
#include <cmath>
#include <cstdlib>
#include <semaphore>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "aptness/error.hpp"
#include "aptness/gateway.hpp"
#include "aptness/text.hpp"

namespace aptness::llm {

class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : sem_(std::max(1, limit)) {}
  void acquire() { sem_.acquire(); }
  void release() { sem_.release(); }

 private:
  std::counting_semaphore<1024> sem_;
};

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post_json(const std::string& url,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         const std::string& body, double timeout_seconds) override {
    if (network_disabled()) {
      throw Error(ErrorKind::kTransport, "network disabled; refusing POST " + url);
    }
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorKind::kConfig, "malformed url '" + url + "'");
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(timeout_seconds);
    const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(path, hdrs, body, "application/json");
    if (!res) {
      throw Error(ErrorKind::kTransport,
                  "POST " + url + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }
};

std::string endpoint(const std::string& base_url, std::string_view suffix) {
  std::string base = base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  if (base.size() >= 3 && base.compare(base.size() - 3, 3, "/v1") == 0) {
    return base + std::string(suffix);
  }
  return base + "/v1" + std::string(suffix);
}

std::vector<std::pair<std::string, std::string>> auth_headers(const ProviderConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorKind::kConfig,
                  "environment variable " + cfg.api_key_env + " (API key) is not set");
    }
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

// 429 and 5xx are transient; every other non-2xx status is final.
void check_status(const HttpResponse& res, const std::string& url) {
  if (res.status >= 200 && res.status < 300) return;
  const std::string excerpt = res.body.substr(0, 200);
  const std::string msg = "HTTP " + std::to_string(res.status) + " from " + url + ": " + excerpt;
  if (res.status == 429 || res.status >= 500) throw Error(ErrorKind::kTransport, msg);
  throw Error(ErrorKind::kRequest, msg);
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
    throw Error(ErrorKind::kProviderContract, "provider returned non-JSON body: " +
                                                  body.substr(0, 200));
  }
}

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() {
  return std::make_shared<HttplibTransport>();
}

OpenAIChatProvider::OpenAIChatProvider(ProviderConfig cfg,
                                       std::shared_ptr<HttpTransport> transport, SleepFn sleep)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      sleep_(std::move(sleep)),
      limiter_(std::make_shared<InFlightLimiter>(cfg_.max_in_flight)) {
  cfg_.validate();
}

ChatResult OpenAIChatProvider::chat(const ChatRequest& request) {
  const std::string url = endpoint(cfg_.base_url, "/chat/completions");
  const std::string body = chat_wire_request(request, cfg_).dump();
  const auto headers = auth_headers(cfg_);

  limiter_->acquire();
  struct Release {
    InFlightLimiter& l;
    ~Release() { l.release(); }
  } release{*limiter_};

  const auto start = std::chrono::steady_clock::now();
  auto response = with_retries(cfg_.retry, sleep_, [&] {
    attempts_.fetch_add(1);
    auto res = transport_->post_json(url, headers, body, cfg_.timeout_seconds);
    check_status(res, url);
    return res;
  });
  const auto elapsed = std::chrono::steady_clock::now() - start;

  const json parsed = parse_body(response.body);
  ChatResult result;
  try {
    result.text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kProviderContract,
                "chat response lacks choices[0].message.content: " + response.body.substr(0, 200));
  }
  if (trim(result.text).empty()) {
    throw Error(ErrorKind::kProviderContract, "chat response content is empty");
  }
  if (parsed.contains("usage") && parsed["usage"].is_object()) {
    result.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
    result.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0);
  }
  result.latency_ms = std::chrono::duration<double, std::milli>(elapsed).count();
  return result;
}

OpenAIEmbedder::OpenAIEmbedder(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport,
                               SleepFn sleep)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
  cfg_.validate();
}

std::vector<std::vector<float>> OpenAIEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) {
    throw Error(ErrorKind::kPrecondition, "embed called with no texts");
  }
  const std::string url = endpoint(cfg_.base_url, "/embeddings");
  const auto headers = auth_headers(cfg_);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg_.embed_batch_size));

  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (std::size_t begin = 0; begin < texts.size(); begin += batch) {
    const std::size_t end = std::min(texts.size(), begin + batch);
    const std::vector<std::string> chunk(texts.begin() + static_cast<std::ptrdiff_t>(begin),
                                         texts.begin() + static_cast<std::ptrdiff_t>(end));
    const std::string body = embed_wire_request(chunk, cfg_).dump();
    auto response = with_retries(cfg_.retry, sleep_, [&] {
      auto res = transport_->post_json(url, headers, body, cfg_.timeout_seconds);
      check_status(res, url);
      return res;
    });
    const json parsed = parse_body(response.body);
    if (!parsed.contains("data") || !parsed["data"].is_array() ||
        parsed["data"].size() != chunk.size()) {
      throw Error(ErrorKind::kProviderContract, "embedding response has wrong 'data' length");
    }
    // Entries carry an index; order by it rather than by position.
    std::vector<std::vector<float>> batch_vectors(chunk.size());
    for (std::size_t i = 0; i < parsed["data"].size(); ++i) {
      const auto& item = parsed["data"][i];
      const std::size_t idx = item.value("index", i);
      if (idx >= chunk.size()) {
        throw Error(ErrorKind::kProviderContract, "embedding index out of range");
      }
      batch_vectors[idx] = item.at("embedding").get<std::vector<float>>();
    }
    for (auto& v : batch_vectors) out.push_back(std::move(v));
  }
  for (const auto& v : out) {
    if (v.empty() || v.size() != out.front().size()) {
      throw Error(ErrorKind::kProviderContract, "embedding dimension inconsistent within response");
    }
  }
  return out;
}

}  // namespace aptness::llm
