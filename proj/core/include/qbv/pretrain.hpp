#pragma once

// Supervised class-label pretraining of one encoder with a linear softmax
// classifier on the raw embedding. Both towers of a dual model can then start
// from copies of the pretrained parameters.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qbv/audio_io.hpp"
#include "qbv/encoder.hpp"
#include "qbv/manifest.hpp"
#include "qbv/training.hpp"

namespace qbv {

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledClips {
  std::vector<AudioClip> clips;
  /// Class index per clip, in [0, n_classes).
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;
};

/// Linear classifier: logits = W z + b, W is n_classes x dim (row-major).
struct LinearClassifier {
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // W then b

  static LinearClassifier init(std::size_t n_classes, std::size_t dim, std::uint64_t seed);
  std::vector<double> logits(std::span<const double> z) const;
};

/// Mean softmax cross-entropy of a batch and its gradients with respect to
/// the encoder parameters (added into encoder_grad) and the classifier.
double classifier_loss_and_gradients(const EncoderParams& params, const LinearClassifier& head,
                                     std::span<const Spectrogram> specs, std::span<const std::size_t> labels,
                                     std::span<double> encoder_grad, std::span<double> head_grad,
                                     std::size_t* correct = nullptr);

struct PretrainEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct PretrainResult {
  EncoderParams params;
  std::vector<PretrainEpoch> history;
};

PretrainResult pretrain_encoder(const LabeledClips& data, const TrainingSetup& setup, const PretrainConfig& config,
                                const std::function<void(const PretrainEpoch&)>& on_epoch = {});

/// Every reference and imitation of the manifest, labelled by the reference
/// "class" field (or the reference id when absent).
LabeledClips labeled_clips(const Manifest& manifest, ClipStore& clips);

/// A model for `setup` whose towers both start from `params`.
QbvModel model_from_pretrained(const TrainingSetup& setup, const EncoderParams& params);

}  // namespace qbv
