#include <httplib.h>

#include <fstream>
#include <iterator>

#include "deepest/error.hpp"
#include "deepest/listen.hpp"

namespace deepest {
namespace {

int status_for(const std::string& code) {
  if (code == "UnknownSession" || code == "UnknownTrial" || code == "MissingStimulus" || code == "NotFound")
    return 404;
  if (code == "DuplicateResponse") return 409;
  if (code == "InsufficientResponses") return 422;
  if (code == "WriteFailed" || code == "CorruptStore" || code == "InternalError") return 500;
  return 400;
}

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
  send_json(res, status_for(code), {{"code", code}, {"message", message}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidValue", std::string("request body is not JSON: ") + e.what());
  }
}

// Runs `body`, turning library errors into {code, message} responses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& body) {
  try {
    body();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const std::exception& e) {
    send_error(res, "InternalError", e.what());
  }
}

}  // namespace

struct ListenServer::Impl {
  ListenService& service;
  httplib::Server server;
};

ListenServer::ListenServer(ListenService& service) : impl_(new Impl{service, {}}) {
  auto& svr = impl_->server;
  ListenService& svc = service;

  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  svr.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = svc.create_session(SessionConfig::from_json(parse_body(req)));
      const auto [done, total] = svc.progress(id);
      send_json(res, 201, {{"session_id", id}, {"total", total}, {"completed", done},
                           {"next", "/sessions/" + id + "/trials/next"}});
    });
  });

  svr.Get(R"(/sessions/([^/]+)/trials/next)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const auto next = svc.next_trial(id);
      const auto [done, total] = svc.progress(id);
      nlohmann::ordered_json body{{"session_id", id}, {"completed", done}, {"total", total}};
      body["done"] = !next.has_value();
      if (next) body["trial"] = next->public_json();
      send_json(res, 200, body);
    });
  });

  svr.Get(R"(/audio/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const AudioItem* a = svc.catalog().find(req.matches[1]);
      if (a == nullptr) fail("MissingStimulus", "no stimulus " + std::string(req.matches[1]));
      std::ifstream in(a->path, std::ios::binary);
      if (!in) fail("MissingStimulus", "stimulus " + a->ref + " is not readable");
      std::string bytes{std::istreambuf_iterator<char>(in), {}};
      res.set_content(std::move(bytes), "audio/wav");
    });
  });

  svr.Post("/responses", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto r = TrialResponse::from_json(parse_body(req));
      svc.submit(r);
      send_json(res, 201, {{"status", "recorded"}, {"trial_id", r.trial_id}});
    });
  });

  svr.Get("/results", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Protocol p = parse_protocol(req.has_param("protocol") ? req.get_param_value("protocol") : "MOS");
      std::optional<std::string> group;
      if (req.has_param("group") && !req.get_param_value("group").empty()) group = req.get_param_value("group");
      send_json(res, 200, svc.results(p, group));
    });
  });

  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) send_error(res, "NotFound", "no route for " + req.method + " " + req.path);
  });
}

ListenServer::~ListenServer() { stop(); }

bool ListenServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    return port_ > 0;
  }
  port_ = port;
  return impl_->server.bind_to_port(host, port);
}

void ListenServer::serve() { impl_->server.listen_after_bind(); }

void ListenServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace deepest
