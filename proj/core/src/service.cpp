#include "qbv/service.hpp"

#include <algorithm>

#include <cctype>
#include <chrono>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qbv {

std::string audio_url_for(const std::string& id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out = "/api/audio/";
  for (unsigned char c : id) {
    if (std::isalnum(c) != 0 || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

std::string QueryResponse::to_json() const {
  nlohmann::json results_json = nlohmann::json::array();
  for (const auto& r : results) results_json.push_back({{"id", r.id}, {"score", r.score}, {"audio_url", r.audio_url}});
  return nlohmann::json{{"results", results_json}, {"backend", backend}, {"latency_ms", latency_ms}}.dump();
}

void SearchService::add_backend(const std::string& name, EmbeddingIndex index,
                                std::shared_ptr<const QueryFeaturizer> featurizer) {
  if (!featurizer) throw std::invalid_argument("service: backend '" + name + "' needs a featurizer");
  if (index.size() == 0) throw std::invalid_argument("service: backend '" + name + "' has an empty index");
  backends_[name] = Entry{std::move(index), std::move(featurizer)};
}

void SearchService::set_reference_audio(std::map<std::string, std::filesystem::path> paths) {
  audio_ = std::move(paths);
}

QueryResponse SearchService::handle_query(std::span<const std::uint8_t> wav, std::size_t k,
                                          const std::string& backend) const {
  const auto start = std::chrono::steady_clock::now();
  const auto it = backends_.find(backend);
  if (it == backends_.end()) throw ServiceError(404, "unknown backend '" + backend + "'");
  const Entry& e = it->second;
  if (k == 0 || k > e.index.size()) {
    throw ServiceError(400, "k must be in [1, " + std::to_string(e.index.size()) + "]");
  }
  AudioClip clip;
  try {
    clip = decode_wav(wav, e.featurizer->sample_rate(), "query");
  } catch (const AudioDecodeError& err) {
    throw ServiceError(400, std::string("undecodable audio: ") + err.what());
  }
  if (std::ranges::all_of(clip.samples, [](float x) { return x == 0.0f; })) {
    throw ServiceError(422, "zero-signal query: audio is silent");
  }
  RetrievalResult r;
  try {
    r = query_clip(e.index, clip, *e.featurizer, k);
  } catch (const DegenerateInputError& err) {
    throw ServiceError(422, std::string("zero-signal query: ") + err.what());
  }
  QueryResponse resp;
  resp.backend = backend;
  for (auto& s : r.ranked) resp.results.push_back({s.id, s.score, audio_url_for(s.id)});
  resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return resp;
}

std::vector<std::string> SearchService::backends() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : backends_) out.push_back(name);
  return out;
}

std::vector<std::string> SearchService::reference_ids() const {
  if (backends_.empty()) return {};
  return backends_.begin()->second.index.ids;
}

std::optional<std::filesystem::path> SearchService::audio_path(const std::string& id) const {
  const auto it = audio_.find(id);
  if (it == audio_.end()) return std::nullopt;
  return it->second;
}

const EmbeddingIndex& SearchService::index(const std::string& backend) const {
  const auto it = backends_.find(backend);
  if (it == backends_.end()) throw ServiceError(404, "unknown backend '" + backend + "'");
  return it->second.index;
}

}  // namespace qbv
