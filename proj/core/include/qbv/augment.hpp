#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "qbv/audio_io.hpp"
#include "qbv/dsp.hpp"
#include "qbv/random.hpp"

namespace qbv {

struct AugmentConfig {
  bool enabled = true;
  /// Waveform samples.
  std::size_t max_shift = 4000;
  /// Spectrogram frames.
  std::size_t max_time_mask = 400;
  /// Spectrogram bins.
  std::size_t max_freq_mask = 4;
  double mixstyle_p = 0.3;
  double mixstyle_alpha = 0.4;
  double mask_fill = 0.0;
  double mixstyle_eps = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Circular rotation: out[(i + shift) mod n] = in[i]. Positive shifts delay.
/// Throws std::out_of_range if |shift| > max_shift.
AudioClip time_shift(const AudioClip& clip, long shift, std::size_t max_shift);

enum class MaskAxis { time, frequency };

/// Sets rows (frequency) or columns (time) [start, start + length) to fill.
Spectrogram spec_mask(const Spectrogram& spec, MaskAxis axis, std::size_t length, std::size_t start,
                      std::size_t max_length, double fill = 0.0);

/// Freq-MixStyle. For each spectrogram b and bin f, the time mean mu and the
/// stabilized std s = sigma + eps are mixed with those of batch element
/// permutation[b]: mu' = lambda mu_b + (1 - lambda) mu_p, s' likewise, and
/// out = (x - mu) / s * s' + mu'.
std::vector<Spectrogram> freq_mixstyle(std::span<const Spectrogram> batch, double lambda,
                                       std::span<const std::size_t> permutation, double eps = 1e-5);

/// Beta(a, b) via two Gamma draws.
double sample_beta(double a, double b, Rng& rng);

/// Random draws for the training-time pipeline. All randomness flows through
/// the caller's Rng, so a fixed seed reproduces the same augmented batch.
class Augmenter {
 public:
  explicit Augmenter(AugmentConfig config);

  const AugmentConfig& config() const { return config_; }

  AudioClip random_shift(const AudioClip& clip, Rng& rng) const;
  /// One time mask and one frequency mask, lengths uniform in [0, max].
  Spectrogram random_masks(const Spectrogram& spec, Rng& rng) const;
  /// Applies Freq-MixStyle to the whole batch with probability mixstyle_p.
  /// Returns true if it was applied.
  bool random_mixstyle(std::vector<Spectrogram>& batch, Rng& rng) const;
  /// Paired form: each batch is mixed with its own statistics, but both use
  /// the same lambda and permutation, so element b of either batch borrows
  /// from element perm(b) of the same batch.
  bool random_mixstyle(std::vector<Spectrogram>& first, std::vector<Spectrogram>& second, Rng& rng) const;

 private:
  AugmentConfig config_;
};

}  // namespace qbv
