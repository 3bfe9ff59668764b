#pragma once

// REST front end for SearchService:
//   POST /api/query        multipart form: audio (WAV file), k, backend
//   GET  /api/references   {"references": [{"id", "audio_url"}], "backends": [...]}
//   GET  /api/audio/{id}   WAV bytes of a reference
//   GET  /api/health       {"status": "ok", "backends": [...]}
// Errors are JSON {"error": message} with the ServiceError status.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "qbv/service.hpp"

namespace qbv {

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const SearchService> service,
                      std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to port (0 = any free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qbv
