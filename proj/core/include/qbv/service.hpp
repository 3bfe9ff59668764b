#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbv/errors.hpp"
#include "qbv/retrieval.hpp"

namespace qbv {

/// Request failure carrying the HTTP status it maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct QueryResult {
  std::string id;
  double score = 0.0;
  std::string audio_url;
};

struct QueryResponse {
  std::vector<QueryResult> results;
  std::string backend;
  double latency_ms = 0.0;

  /// {"results": [{"id", "score", "audio_url"}], "backend", "latency_ms"}
  std::string to_json() const;
};

/// Immutable after setup; handle_query may be called concurrently.
class SearchService {
 public:
  void add_backend(const std::string& name, EmbeddingIndex index, std::shared_ptr<const QueryFeaturizer> featurizer);
  void set_reference_audio(std::map<std::string, std::filesystem::path> paths);

  /// Decode -> conform -> features -> query. Throws ServiceError: 400 for
  /// undecodable audio or a bad k, 404 for an unknown backend, 422 for a
  /// zero-signal query.
  QueryResponse handle_query(std::span<const std::uint8_t> wav, std::size_t k, const std::string& backend) const;

  std::vector<std::string> backends() const;
  /// Reference ids of the first backend in name order.
  std::vector<std::string> reference_ids() const;
  std::optional<std::filesystem::path> audio_path(const std::string& id) const;
  const EmbeddingIndex& index(const std::string& backend) const;

 private:
  struct Entry {
    EmbeddingIndex index;
    std::shared_ptr<const QueryFeaturizer> featurizer;
  };
  std::map<std::string, Entry> backends_;
  std::map<std::string, std::filesystem::path> audio_;
};

std::string audio_url_for(const std::string& id);

}  // namespace qbv
