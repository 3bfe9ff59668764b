#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qbv/audio_io.hpp"
#include "qbv/dsp.hpp"
#include "qbv/qbve.hpp"
#include "qbv/training.hpp"

namespace qbv {

enum class Backend { encoder, imported, twodft };

std::string backend_name(Backend b);
/// Throws std::invalid_argument for an unknown name.
Backend parse_backend(const std::string& name);

/// Reference embeddings, one f32 row per id.
struct EmbeddingIndex {
  std::vector<std::string> ids;
  std::uint32_t dim = 0;
  std::vector<float> matrix;
  Backend backend = Backend::imported;

  std::size_t size() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {matrix.data() + i * dim, dim}; }
};

/// Rows whose norm is not within 1e-6 of one are l2-normalized; rows that
/// already are unit length are stored untouched. Throws std::invalid_argument
/// on duplicate ids or ragged rows, DegenerateInputError on a zero row.
EmbeddingIndex build_index(std::vector<std::string> ids, const std::vector<std::vector<double>>& rows, Backend backend);
EmbeddingIndex build_index(const QbveBlock& block, Backend backend = Backend::imported);

QbveBlock to_qbve(const EmbeddingIndex& index);
void save_index(const std::filesystem::path& path, const EmbeddingIndex& index);
EmbeddingIndex load_index(const std::filesystem::path& path, Backend backend = Backend::imported);

struct ScoredId {
  std::string id;
  double score = 0.0;
};

struct RetrievalResult {
  std::vector<ScoredId> ranked;
};

/// Top-k rows by cosine similarity to `query` (computed in double), score
/// descending, ties by ascending id. Throws std::invalid_argument if the
/// index is empty, k is outside [1, size] or the dimensions differ; DegenerateInputError if
/// the query has zero norm.
RetrievalResult query_vector(const EmbeddingIndex& index, std::span<const double> query, std::size_t k);

/// Maps an audio clip to the query-side feature vector of a backend.
class QueryFeaturizer {
 public:
  virtual ~QueryFeaturizer() = default;
  virtual std::vector<double> reference_features(const AudioClip& clip) const = 0;
  virtual std::vector<double> query_features(const AudioClip& clip) const = 0;
  virtual int sample_rate() const = 0;
};

/// Reference tower for candidates, imitation tower for queries. Requires a
/// cosine-head model.
class EncoderFeaturizer : public QueryFeaturizer {
 public:
  explicit EncoderFeaturizer(QbvModel model);
  std::vector<double> reference_features(const AudioClip& clip) const override;
  std::vector<double> query_features(const AudioClip& clip) const override;
  int sample_rate() const override { return model_.features.sample_rate(); }
  const QbvModel& model() const { return model_; }

 private:
  QbvModel model_;
};

/// CQT + 2DFT magnitude on clips conformed to a fixed duration.
class TwoDftFeaturizer : public QueryFeaturizer {
 public:
  TwoDftFeaturizer(BaselineConfig config, double duration_seconds);
  std::vector<double> reference_features(const AudioClip& clip) const override;
  std::vector<double> query_features(const AudioClip& clip) const override { return reference_features(clip); }
  int sample_rate() const override { return featurizer_.config().cqt.sample_rate; }

 private:
  BaselineFeaturizer featurizer_;
  double duration_;
};

EmbeddingIndex build_index(std::span<const AudioClip> references, const QueryFeaturizer& featurizer,
                           Backend backend);

RetrievalResult query_clip(const EmbeddingIndex& index, const AudioClip& imitation,
                           const QueryFeaturizer& featurizer, std::size_t k);

}  // namespace qbv
