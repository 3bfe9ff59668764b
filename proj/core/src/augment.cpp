#include "qbv/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qbv {

void AugmentConfig::validate() const {
  if (mixstyle_p < 0.0 || mixstyle_p > 1.0) throw std::invalid_argument("mixstyle_p must lie in [0, 1]");
  if (!(mixstyle_alpha > 0.0)) throw std::invalid_argument("mixstyle_alpha must be positive");
  if (!(mixstyle_eps > 0.0)) throw std::invalid_argument("mixstyle_eps must be positive");
}

AudioClip time_shift(const AudioClip& clip, long shift, std::size_t max_shift) {
  const auto magnitude = static_cast<std::size_t>(shift < 0 ? -shift : shift);
  if (magnitude > max_shift) {
    throw std::out_of_range("time_shift: |shift| = " + std::to_string(magnitude) + " exceeds " +
                            std::to_string(max_shift));
  }
  AudioClip out = clip;
  const std::size_t n = clip.samples.size();
  if (n == 0 || shift == 0) return out;
  const auto k = static_cast<std::size_t>(((shift % static_cast<long>(n)) + static_cast<long>(n)) %
                                          static_cast<long>(n));
  std::rotate_copy(clip.samples.begin(), clip.samples.end() - static_cast<std::ptrdiff_t>(k), clip.samples.end(),
                   out.samples.begin());
  return out;
}

Spectrogram spec_mask(const Spectrogram& spec, MaskAxis axis, std::size_t length, std::size_t start,
                      std::size_t max_length, double fill) {
  const std::size_t extent = axis == MaskAxis::time ? spec.frames : spec.bins;
  if (length > max_length) {
    throw std::out_of_range("spec_mask: length " + std::to_string(length) + " exceeds maximum " +
                            std::to_string(max_length));
  }
  if (start > extent || length > extent - start) {
    throw std::out_of_range("spec_mask: band [" + std::to_string(start) + ", " + std::to_string(start + length) +
                            ") outside axis of size " + std::to_string(extent));
  }
  Spectrogram out = spec;
  if (axis == MaskAxis::time) {
    for (std::size_t b = 0; b < out.bins; ++b) {
      auto row = out.row(b);
      std::fill(row.begin() + static_cast<std::ptrdiff_t>(start),
                row.begin() + static_cast<std::ptrdiff_t>(start + length), fill);
    }
  } else {
    for (std::size_t b = start; b < start + length; ++b) std::ranges::fill(out.row(b), fill);
  }
  return out;
}

std::vector<Spectrogram> freq_mixstyle(std::span<const Spectrogram> batch, double lambda,
                                       std::span<const std::size_t> permutation, double eps) {
  const std::size_t n = batch.size();
  if (permutation.size() != n) throw std::invalid_argument("freq_mixstyle: permutation size differs from batch");
  std::vector<bool> seen(n, false);
  for (std::size_t p : permutation) {
    if (p >= n || seen[p]) throw std::invalid_argument("freq_mixstyle: permutation is not a bijection");
    seen[p] = true;
  }
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("freq_mixstyle: lambda must lie in [0, 1]");
  if (n == 0) return {};
  for (const auto& s : batch) {
    if (!s.same_shape(batch[0])) throw std::invalid_argument("freq_mixstyle: spectrogram shapes differ");
  }
  const std::size_t bins = batch[0].bins;
  const std::size_t frames = batch[0].frames;
  if (frames == 0) return {batch.begin(), batch.end()};

  std::vector<double> mean(n * bins);
  std::vector<double> scale(n * bins);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t f = 0; f < bins; ++f) {
      const auto row = batch[b].row(f);
      const double mu = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(frames);
      double var = 0.0;
      for (double x : row) var += (x - mu) * (x - mu);
      var /= static_cast<double>(frames);
      mean[b * bins + f] = mu;
      scale[b * bins + f] = std::sqrt(var) + eps;
    }
  }

  std::vector<Spectrogram> out(batch.begin(), batch.end());
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t p = permutation[b];
    for (std::size_t f = 0; f < bins; ++f) {
      const double mu = mean[b * bins + f];
      const double s = scale[b * bins + f];
      const double mu_mix = lambda * mu + (1.0 - lambda) * mean[p * bins + f];
      const double s_mix = lambda * s + (1.0 - lambda) * scale[p * bins + f];
      for (double& x : out[b].row(f)) x = (x - mu) / s * s_mix + mu_mix;
    }
  }
  return out;
}

double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

Augmenter::Augmenter(AugmentConfig config) : config_(config) { config_.validate(); }

AudioClip Augmenter::random_shift(const AudioClip& clip, Rng& rng) const {
  if (!config_.enabled || config_.max_shift == 0) return clip;
  const auto limit = static_cast<long>(config_.max_shift);
  std::uniform_int_distribution<long> dist(-limit, limit);
  return time_shift(clip, dist(rng), config_.max_shift);
}

Spectrogram Augmenter::random_masks(const Spectrogram& spec, Rng& rng) const {
  if (!config_.enabled) return spec;
  Spectrogram out = spec;
  auto apply = [&](MaskAxis axis, std::size_t max_len) {
    const std::size_t extent = axis == MaskAxis::time ? out.frames : out.bins;
    const std::size_t cap = std::min(max_len, extent);
    if (cap == 0) return;
    const std::size_t len = std::uniform_int_distribution<std::size_t>(0, cap)(rng);
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, extent - len)(rng);
    out = spec_mask(out, axis, len, start, max_len, config_.mask_fill);
  };
  apply(MaskAxis::time, config_.max_time_mask);
  apply(MaskAxis::frequency, config_.max_freq_mask);
  return out;
}

bool Augmenter::random_mixstyle(std::vector<Spectrogram>& batch, Rng& rng) const {
  std::vector<Spectrogram> none;
  return random_mixstyle(batch, none, rng);
}

bool Augmenter::random_mixstyle(std::vector<Spectrogram>& first, std::vector<Spectrogram>& second, Rng& rng) const {
  if (!second.empty() && second.size() != first.size()) {
    throw std::invalid_argument("mixstyle: paired batches differ in size");
  }
  if (!config_.enabled || first.size() < 2) return false;
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= config_.mixstyle_p) return false;
  const double lambda = sample_beta(config_.mixstyle_alpha, config_.mixstyle_alpha, rng);
  std::vector<std::size_t> perm(first.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  first = freq_mixstyle(first, lambda, perm, config_.mixstyle_eps);
  if (!second.empty()) second = freq_mixstyle(second, lambda, perm, config_.mixstyle_eps);
  return true;
}

}  // namespace qbv
