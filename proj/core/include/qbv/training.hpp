#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "qbv/audio_io.hpp"
#include "qbv/augment.hpp"
#include "qbv/contrastive.hpp"
#include "qbv/dsp.hpp"
#include "qbv/encoder.hpp"

namespace qbv {

/// Clip -> encoder input: conform to duration_seconds, then log-mel.
struct FeatureConfig {
  double duration_seconds = kDefaultDurationSeconds;
  LogMelConfig logmel;

  int sample_rate() const { return logmel.sample_rate; }
  std::size_t frames() const;
  void validate() const;
};

class FeaturePipeline {
 public:
  explicit FeaturePipeline(FeatureConfig config);
  const FeatureConfig& config() const { return config_; }
  AudioClip conform(const AudioClip& clip) const;
  /// Conforms then extracts log-mel. Throws if the clip rate differs.
  Spectrogram operator()(const AudioClip& clip) const;
  /// Log-mel of an already conformed clip.
  Spectrogram extract(const AudioClip& conformed) const { return extractor_(conformed); }

 private:
  FeatureConfig config_;
  LogMelExtractor extractor_;
};

/// Every knob of a training run. The encoder input shape is derived from the
/// feature configuration (see encoder_config()).
struct TrainingSetup {
  TrainConfig train;
  LossConfig loss;
  AugmentConfig augment;
  EncoderConfig encoder;
  FeatureConfig features;
  bool shared_encoder = false;

  EncoderConfig encoder_config() const;
  void validate() const;
};

/// A trained (or freshly initialized) retrieval model.
struct QbvModel {
  FeatureConfig features;
  DualEncoder encoders;
  LossConfig loss;
  std::optional<FnnHead> head;

  static QbvModel create(const TrainingSetup& setup);

  /// Raw (unnormalized) embedding of a clip through one tower.
  Embedding embed(Tower tower, const AudioClip& clip) const;
  Embedding embed_spectrogram(Tower tower, const Spectrogram& spec) const;
  /// Cosine similarity, or the FNN logit when the model uses an FNN head.
  double score(const Embedding& ref, const Embedding& imit) const;
  bool uses_fnn() const { return loss.head == SimilarityHead::fnn; }
};

/// references[i] is matched by every clip in imitations[i].
struct PairedDataset {
  std::vector<AudioClip> references;
  std::vector<std::vector<AudioClip>> imitations;
};

/// Held-out queries ranked against the candidate references.
struct ValidationSet {
  std::vector<AudioClip> candidates;
  std::vector<AudioClip> queries;
  std::vector<std::size_t> targets;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  /// NaN when no validation set was given.
  double val_mrr = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  QbvModel model;
  std::vector<EpochMetrics> history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Contrastive training loop. Each epoch draws pairs per TrainConfig::sampling
/// in seeded random order, forms batches of distinct references (trailing
/// batches of fewer than 2 pairs are skipped), augments both towers and takes
/// one Adam step per batch with lr_at.
/// Throws DivergenceError if the loss becomes non-finite.
TrainResult train(const PairedDataset& data, const TrainingSetup& setup, QbvModel initial,
                  const ValidationSet* validation = nullptr, const EpochCallback& on_epoch = {});
TrainResult train(const PairedDataset& data, const TrainingSetup& setup, const ValidationSet* validation = nullptr,
                  const EpochCallback& on_epoch = {});

/// MRR of the validation queries under `model` (ties broken by candidate id).
double validation_mrr(const QbvModel& model, const ValidationSet& validation);

/// Gradient of one training-batch loss w.r.t. all parameters of the model,
/// without augmentation. Exposed for gradient checking. Returns the loss.
/// grads[k] matches encoders.parameter_set(k); head_grad is filled when the
/// model has an FNN head.
double batch_loss_and_gradients(const QbvModel& model, std::span<const Spectrogram> ref_specs,
                                std::span<const Spectrogram> imit_specs, std::span<const PairLabel> bce_pairs,
                                std::vector<std::vector<double>>& grads, std::vector<double>* head_grad = nullptr);

}  // namespace qbv
