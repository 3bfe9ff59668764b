#include "qbv/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "qbv/errors.hpp"

namespace qbv {

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::encoder:
      return "encoder";
    case Backend::imported:
      return "imported";
    case Backend::twodft:
      return "twodft";
  }
  return "unknown";
}

Backend parse_backend(const std::string& name) {
  if (name == "encoder") return Backend::encoder;
  if (name == "imported") return Backend::imported;
  if (name == "twodft") return Backend::twodft;
  throw std::invalid_argument("unknown backend '" + name + "' (expected encoder, twodft or imported)");
}

namespace {

void check_unique(const std::vector<std::string>& ids) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw std::invalid_argument("index: duplicate id '" + id + "'");
  }
}

template <class T>
double norm_of(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

void append_row(EmbeddingIndex& index, const std::string& id, std::span<const float> row) {
  const double n = norm_of(row);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInputError("index: row '" + id + "' has zero or non-finite norm");
  if (std::abs(n - 1.0) <= 1e-6) {
    index.matrix.insert(index.matrix.end(), row.begin(), row.end());
  } else {
    for (float x : row) index.matrix.push_back(static_cast<float>(static_cast<double>(x) / n));
  }
}

}  // namespace

EmbeddingIndex build_index(std::vector<std::string> ids, const std::vector<std::vector<double>>& rows,
                           Backend backend) {
  if (ids.size() != rows.size()) throw std::invalid_argument("index: ids and rows differ in length");
  check_unique(ids);
  EmbeddingIndex index;
  index.backend = backend;
  index.dim = rows.empty() ? 0 : static_cast<std::uint32_t>(rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != index.dim) throw std::invalid_argument("index: ragged rows");
    const double n = norm_of(std::span<const double>(rows[i]));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateInputError("index: row '" + ids[i] + "' has zero or non-finite norm");
    }
    for (double x : rows[i]) index.matrix.push_back(static_cast<float>(x / n));
  }
  index.ids = std::move(ids);
  return index;
}

EmbeddingIndex build_index(const QbveBlock& block, Backend backend) {
  if (block.values.size() != block.ids.size() * block.dim) throw std::invalid_argument("index: bad block size");
  check_unique(block.ids);
  EmbeddingIndex index;
  index.backend = backend;
  index.dim = block.dim;
  index.ids = block.ids;
  index.matrix.reserve(block.values.size());
  for (std::size_t i = 0; i < block.ids.size(); ++i) {
    append_row(index, block.ids[i], {block.values.data() + i * block.dim, block.dim});
  }
  return index;
}

QbveBlock to_qbve(const EmbeddingIndex& index) { return QbveBlock{index.dim, index.ids, index.matrix}; }

void save_index(const std::filesystem::path& path, const EmbeddingIndex& index) {
  write_embeddings(path, index.ids, index.matrix, index.dim);
}

EmbeddingIndex load_index(const std::filesystem::path& path, Backend backend) {
  return build_index(read_embeddings(path), backend);
}

RetrievalResult query_vector(const EmbeddingIndex& index, std::span<const double> query, std::size_t k) {
  if (index.size() == 0) throw std::invalid_argument("query: index is empty");
  if (k == 0 || k > index.size()) {
    throw std::invalid_argument("query: k must be in [1, " + std::to_string(index.size()) + "]");
  }
  if (query.size() != index.dim) {
    throw std::invalid_argument("query: dimension " + std::to_string(query.size()) + " does not match index dimension " +
                                std::to_string(index.dim));
  }
  const double qn = norm_of(query);
  if (!(qn > 0.0) || !std::isfinite(qn)) throw DegenerateInputError("query: zero-norm query vector");

  std::vector<ScoredId> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto row = index.row(i);
    double dot = 0.0;
    for (std::size_t d = 0; d < index.dim; ++d) dot += static_cast<double>(row[d]) * query[d];
    const double rn = norm_of(row);
    all[i] = {index.ids[i], std::clamp(dot / (rn * qn), -1.0, 1.0)};
  }
  const std::size_t top = k;
  auto better = [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top), all.end(), better);
  all.resize(top);
  return RetrievalResult{std::move(all)};
}

EncoderFeaturizer::EncoderFeaturizer(QbvModel model) : model_(std::move(model)) {
  if (model_.uses_fnn()) throw std::invalid_argument("encoder index: cosine retrieval needs a cosine-head model");
}

std::vector<double> EncoderFeaturizer::reference_features(const AudioClip& clip) const {
  return model_.embed(Tower::reference, clip).values;
}

std::vector<double> EncoderFeaturizer::query_features(const AudioClip& clip) const {
  return model_.embed(Tower::imitation, clip).values;
}

TwoDftFeaturizer::TwoDftFeaturizer(BaselineConfig config, double duration_seconds)
    : featurizer_(config), duration_(duration_seconds) {
  if (!(duration_seconds > 0.0)) throw std::invalid_argument("2dft: duration must be positive");
}

std::vector<double> TwoDftFeaturizer::reference_features(const AudioClip& clip) const {
  if (clip.sample_rate != sample_rate()) {
    throw std::invalid_argument("2dft: clip '" + clip.id + "' has sample rate " + std::to_string(clip.sample_rate));
  }
  return featurizer_(conform_length(clip, duration_)).values;
}

EmbeddingIndex build_index(std::span<const AudioClip> references, const QueryFeaturizer& featurizer,
                           Backend backend) {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  for (const auto& clip : references) {
    ids.push_back(clip.id);
    rows.push_back(featurizer.reference_features(clip));
  }
  return build_index(std::move(ids), rows, backend);
}

RetrievalResult query_clip(const EmbeddingIndex& index, const AudioClip& imitation,
                           const QueryFeaturizer& featurizer, std::size_t k) {
  if (index.size() == 0) throw std::invalid_argument("query: index is empty");
  return query_vector(index, featurizer.query_features(imitation), k);
}

}  // namespace qbv
