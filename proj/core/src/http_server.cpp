#include "qbv/http_server.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace qbv {

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

}  // namespace

struct HttpServer::Impl {
  std::shared_ptr<const SearchService> service;
  httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const SearchService> service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto& srv = impl_->server;
  const SearchService& svc = *impl_->service;

  srv.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"status", "ok"}, {"backends", svc.backends()}}.dump(), "application/json");
  });

  srv.Get("/api/references", [&svc](const httplib::Request&, httplib::Response& res) {
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& id : svc.reference_ids()) refs.push_back({{"id", id}, {"audio_url", audio_url_for(id)}});
    res.set_content(nlohmann::json{{"references", refs}, {"backends", svc.backends()}}.dump(), "application/json");
  });

  srv.Get(R"(/api/audio/(.+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto path = svc.audio_path(id);
    if (!path) return send_error(res, 404, "no audio for '" + id + "'");
    std::ifstream in(*path, std::ios::binary);
    if (!in) return send_error(res, 404, "audio file for '" + id + "' is unreadable");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    res.set_content(bytes, "audio/wav");
  });

  srv.Post("/api/query", [&svc](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.has_file("audio")) return send_error(res, 400, "missing multipart field 'audio'");
      const auto audio = req.get_file_value("audio");
      std::string backend = req.has_file("backend") ? req.get_file_value("backend").content : "";
      if (backend.empty()) {
        const auto names = svc.backends();
        if (names.empty()) return send_error(res, 404, "no backend is served");
        backend = std::find(names.begin(), names.end(), "encoder") != names.end() ? "encoder" : names.front();
      }
      std::size_t k = 10;
      if (req.has_file("k")) {
        const std::string text = req.get_file_value("k").content;
        try {
          std::size_t used = 0;
          const long v = std::stol(text, &used);
          if (used != text.size() || v < 1) throw std::invalid_argument("k");
          k = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          return send_error(res, 400, "k must be a positive integer");
        }
      } else {
        k = std::min(k, svc.index(backend).size());
      }
      const auto* data = reinterpret_cast<const std::uint8_t*>(audio.content.data());
      const QueryResponse r = svc.handle_query({data, audio.content.size()}, k, backend);
      res.set_content(r.to_json(), "application/json");
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  if (static_dir) srv.set_mount_point("/", static_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace qbv
