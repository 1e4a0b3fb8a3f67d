#include <atomic>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "aptness/error.hpp"
#include "aptness/service.hpp"

namespace aptness::service {

namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kRequest:
    case ErrorKind::kParse:
    case ErrorKind::kData:
      return 400;
    case ErrorKind::kNotFound:
      return 404;
    case ErrorKind::kConflict:
    case ErrorKind::kBusy:
      return 409;
    default:
      return 502;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view msg) {
  send_json(res, status, {{"error", {{"kind", kind}, {"message", msg}}}});
}

nlohmann::json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty() && allow_empty) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorKind::kRequest, "request body must be a JSON object");
  }
  return j;
}

// Runs a handler, mapping library errors onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

}  // namespace

struct HttpService::Impl {
  SessionManager& sessions;
  ServiceSettings settings;
  nlohmann::json config_view;
  httplib::Server server;
  int port = -1;

  Impl(SessionManager& s, ServiceSettings st, nlohmann::json view)
      : sessions(s), settings(std::move(st)), config_view(std::move(view)) {
    server.set_default_headers({{"Access-Control-Allow-Origin", settings.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    server.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto id = sessions.create(parse_body(req, true));
        const auto snap = sessions.get(id);
        send_json(res, 201,
                  {{"id", id}, {"config", snap.config.to_json()}, {"created_at", snap.created_at}});
      });
    });

    server.Post(R"(/v1/sessions/([^/]+)/messages)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const std::string id = req.matches[1];
                    const auto body = parse_body(req, false);
                    if (!body.contains("text") || !body.at("text").is_string()) {
                      throw Error(ErrorKind::kRequest, "body needs a string \"text\"");
                    }
                    auto response = sessions.post_message(id, body.at("text").get<std::string>());
                    auto j = to_json(response);
                    j["turn"] = sessions.get(id).turns.size();
                    send_json(res, 200, j);
                  });
                });

    server.Get(R"(/v1/sessions/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] { send_json(res, 200, sessions.get(req.matches[1]).to_json()); });
               });

    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto& r = sessions.resources();
      send_json(res, 200,
                {{"status", "ok"},
                 {"sessions", sessions.size()},
                 {"index_entries", r.index ? r.index->size() : 0}});
    });

    server.Get("/v1/config", [this](const httplib::Request&, httplib::Response& res) {
      auto j = config_view;
      const auto& r = sessions.resources();
      j["defaults"] = r.defaults.to_json();
      nlohmann::json modes = nlohmann::json::object();
      for (auto scheme : {Scheme::kExTES, Scheme::kESConv}) {
        auto& arr = modes[std::string(to_string(scheme))] = nlohmann::json::array();
        for (auto m : sessions.available_modes(scheme)) arr.push_back(to_string(m));
      }
      j["available_modes"] = modes;
      send_json(res, 200, j);
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "http",
                   httplib::status_message(res.status));
      }
    });
  }
};

HttpService::HttpService(SessionManager& sessions, ServiceSettings settings,
                         nlohmann::json config_view)
    : impl_(std::make_unique<Impl>(sessions, std::move(settings), std::move(config_view))) {}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
  auto& s = impl_->settings;
  if (s.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(s.host);
  } else {
    impl_->port = impl_->server.bind_to_port(s.host, s.port) ? s.port : -1;
  }
  if (impl_->port < 0) {
    throw Error(ErrorKind::kConfig,
                "cannot bind " + s.host + ":" + std::to_string(s.port));
  }
  return impl_->port;
}

void HttpService::serve() {
  if (impl_->port < 0) bind();
  spdlog::info("listening on {}:{}", impl_->settings.host, impl_->port);
  impl_->server.listen_after_bind();
}

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace aptness::service
