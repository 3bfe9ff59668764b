#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qbv/audio_io.hpp"

namespace qbv {

enum class SpectrogramKind { log_mel, cqt_magnitude };

/// Time-frequency array stored row-major as [bin][frame].
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;
  std::vector<double> bin_frequencies;
  std::size_t hop = 0;
  SpectrogramKind kind = SpectrogramKind::log_mel;

  Spectrogram() = default;
  Spectrogram(std::size_t n_bins, std::size_t n_frames, double fill = 0.0)
      : bins(n_bins), frames(n_frames), values(n_bins * n_frames, fill) {}

  double& at(std::size_t bin, std::size_t frame) { return values[bin * frames + frame]; }
  double at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
  std::span<double> row(std::size_t bin) { return {values.data() + bin * frames, frames}; }
  std::span<const double> row(std::size_t bin) const { return {values.data() + bin * frames, frames}; }
  bool empty() const { return values.empty(); }
  bool same_shape(const Spectrogram& other) const { return bins == other.bins && frames == other.frames; }
};

struct FeatureVector {
  std::vector<double> values;
};

// ---------------------------------------------------------------------------
// Log-mel

struct LogMelConfig {
  int sample_rate = kDefaultSampleRate;
  std::size_t window = 800;
  std::size_t hop = 320;
  std::size_t n_mels = 128;
  double f_min = 0.0;
  double f_max = 16000.0;
  double log_offset = 1e-5;

  void validate() const;
};

/// Non-centered framing: frames = floor((n - window) / hop) + 1.
std::size_t log_mel_frames(std::size_t num_samples, const LogMelConfig& config);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Precomputed Hann window and triangular mel filterbank (HTK mel scale,
/// peak-normalized filters, n_fft equal to the window length).
class LogMelExtractor {
 public:
  explicit LogMelExtractor(LogMelConfig config);

  /// values[m][t] = ln(sum_k H_m[k] |STFT_t[k]|^2 + log_offset).
  Spectrogram operator()(const AudioClip& clip) const;

  const LogMelConfig& config() const { return config_; }
  const std::vector<double>& center_frequencies() const { return centers_; }
  /// Filter weight of mel band m at rFFT bin k.
  double filter_weight(std::size_t m, std::size_t k) const { return filters_[m * n_freqs_ + k]; }
  std::size_t n_freqs() const { return n_freqs_; }

 private:
  LogMelConfig config_;
  std::size_t n_freqs_ = 0;
  std::vector<double> window_;
  std::vector<double> filters_;
  std::vector<std::size_t> first_bin_;
  std::vector<std::size_t> last_bin_;
  std::vector<double> centers_;
};

Spectrogram log_mel(const AudioClip& clip, const LogMelConfig& config);

// ---------------------------------------------------------------------------
// Constant-Q transform

struct CqtConfig {
  int sample_rate = kDefaultSampleRate;
  double f_min = 32.70;
  std::size_t bins_per_octave = 12;
  std::size_t n_octaves = 8;
  std::size_t hop = 640;

  std::size_t n_bins() const { return bins_per_octave * n_octaves; }
  double q_factor() const;
  double bin_frequency(std::size_t k) const;
  void validate() const;
};

/// Direct-method CQT: one Hann-windowed complex kernel per bin of length
/// ceil(Q * sr / f_k), normalized by its window sum. Frames are centered on
/// t * hop for t in [0, ceil(n / hop)) and the signal is extended
/// periodically, so a circular shift of the input by a multiple of hop is a
/// circular shift of the frames.
class CqtExtractor {
 public:
  explicit CqtExtractor(CqtConfig config);

  Spectrogram operator()(const AudioClip& clip) const;

  const CqtConfig& config() const { return config_; }
  std::size_t kernel_length(std::size_t bin) const { return kernels_[bin].cos.size(); }

 private:
  struct Kernel {
    std::vector<double> cos;
    std::vector<double> sin;
  };
  CqtConfig config_;
  std::vector<Kernel> kernels_;
  std::size_t max_length_ = 0;
};

Spectrogram cqt(const AudioClip& clip, const CqtConfig& config);

// ---------------------------------------------------------------------------
// 2DFT baseline

/// Flattened (row-major) magnitude of the unnormalized 2-D DFT of spec.values.
/// With this convention sum |X|^2 = rows * cols * sum x^2.
FeatureVector two_dft(const Spectrogram& spec);

struct BaselineConfig {
  CqtConfig cqt;
  /// Apply ln(1 + x) to the CQT magnitudes before the 2DFT.
  bool log_compress = true;
};

/// Cosine similarity with plain (unsquared) l2 norms. Throws
/// DegenerateInputError if either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

class BaselineFeaturizer {
 public:
  explicit BaselineFeaturizer(BaselineConfig config);
  FeatureVector operator()(const AudioClip& clip) const;
  const BaselineConfig& config() const { return config_; }

 private:
  BaselineConfig config_;
  CqtExtractor cqt_;
};

FeatureVector baseline_features(const AudioClip& clip, const BaselineConfig& config);
double baseline_similarity(const AudioClip& a, const AudioClip& v, const BaselineConfig& config);

}  // namespace qbv
