#include "qbv/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "fft.hpp"
#include "qbv/errors.hpp"

namespace qbv {

namespace {

void require_rate(const AudioClip& clip, int rate, const char* what) {
  if (clip.sample_rate != rate) {
    throw std::invalid_argument(std::string(what) + ": clip sample rate " + std::to_string(clip.sample_rate) +
                                " does not match configured rate " + std::to_string(rate));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Log-mel

void LogMelConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("log-mel: sample rate must be positive");
  if (window < 2 || hop == 0) throw std::invalid_argument("log-mel: window must be >= 2 and hop >= 1");
  if (n_mels < 1) throw std::invalid_argument("log-mel: n_mels must be >= 1");
  if (f_min < 0.0 || f_max <= f_min || f_max > sample_rate / 2.0) {
    throw std::invalid_argument("log-mel: need 0 <= f_min < f_max <= Nyquist");
  }
  if (!(log_offset > 0.0)) throw std::invalid_argument("log-mel: log_offset must be positive");
}

std::size_t log_mel_frames(std::size_t num_samples, const LogMelConfig& config) {
  if (config.window > num_samples) return 0;
  return (num_samples - config.window) / config.hop + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

LogMelExtractor::LogMelExtractor(LogMelConfig config) : config_(config) {
  config_.validate();
  const std::size_t n_fft = config_.window;
  n_freqs_ = n_fft / 2 + 1;
  window_.resize(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_fft));
  }

  const std::size_t n_mels = config_.n_mels;
  const double mel_lo = hz_to_mel(config_.f_min);
  const double mel_hi = hz_to_mel(config_.f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  centers_.assign(edges.begin() + 1, edges.end() - 1);

  filters_.assign(n_mels * n_freqs_, 0.0);
  first_bin_.assign(n_mels, n_freqs_);
  last_bin_.assign(n_mels, 0);
  const double bin_hz = static_cast<double>(config_.sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m];
    const double mid = edges[m + 1];
    const double hi = edges[m + 2];
    for (std::size_t k = 0; k < n_freqs_; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      if (w > 0.0) {
        filters_[m * n_freqs_ + k] = w;
        first_bin_[m] = std::min(first_bin_[m], k);
        last_bin_[m] = std::max(last_bin_[m], k + 1);
      }
    }
    if (first_bin_[m] >= last_bin_[m]) {
      first_bin_[m] = 0;
      last_bin_[m] = 0;
    }
  }
}

Spectrogram LogMelExtractor::operator()(const AudioClip& clip) const {
  require_rate(clip, config_.sample_rate, "log-mel");
  const std::size_t n = clip.samples.size();
  if (config_.window > n) throw std::invalid_argument("log-mel: window is longer than the clip");
  const std::size_t frames = log_mel_frames(n, config_);

  Spectrogram out(config_.n_mels, frames);
  out.bin_frequencies = centers_;
  out.hop = config_.hop;
  out.kind = SpectrogramKind::log_mel;

  std::vector<double> frame(config_.window);
  std::vector<std::complex<double>> spectrum(n_freqs_);
  std::vector<double> power(n_freqs_);
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = clip.samples.data() + t * config_.hop;
    for (std::size_t i = 0; i < config_.window; ++i) frame[i] = window_[i] * static_cast<double>(src[i]);
    fft::real_forward(frame, spectrum);
    for (std::size_t k = 0; k < n_freqs_; ++k) power[k] = std::norm(spectrum[k]);
    for (std::size_t m = 0; m < config_.n_mels; ++m) {
      double acc = 0.0;
      const double* w = filters_.data() + m * n_freqs_;
      for (std::size_t k = first_bin_[m]; k < last_bin_[m]; ++k) acc += w[k] * power[k];
      out.at(m, t) = std::log(acc + config_.log_offset);
    }
  }
  return out;
}

Spectrogram log_mel(const AudioClip& clip, const LogMelConfig& config) { return LogMelExtractor(config)(clip); }

// ---------------------------------------------------------------------------
// CQT

double CqtConfig::q_factor() const {
  return 1.0 / (std::pow(2.0, 1.0 / static_cast<double>(bins_per_octave)) - 1.0);
}

double CqtConfig::bin_frequency(std::size_t k) const {
  return f_min * std::pow(2.0, static_cast<double>(k) / static_cast<double>(bins_per_octave));
}

void CqtConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("cqt: sample rate must be positive");
  if (!(f_min > 0.0)) throw std::invalid_argument("cqt: f_min must be positive");
  if (bins_per_octave == 0 || n_octaves == 0 || hop == 0) {
    throw std::invalid_argument("cqt: bins_per_octave, n_octaves and hop must be positive");
  }
  const double top = f_min * std::pow(2.0, static_cast<double>(n_octaves));
  if (top > sample_rate / 2.0) {
    throw std::invalid_argument("cqt: f_min * 2^n_octaves = " + std::to_string(top) + " Hz exceeds Nyquist");
  }
}

CqtExtractor::CqtExtractor(CqtConfig config) : config_(config) {
  config_.validate();
  const double q = config_.q_factor();
  kernels_.resize(config_.n_bins());
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    const double fk = config_.bin_frequency(k);
    const auto len = static_cast<std::size_t>(std::ceil(q * config_.sample_rate / fk));
    Kernel& kern = kernels_[k];
    kern.cos.resize(len);
    kern.sin.resize(len);
    double wsum = 0.0;
    std::vector<double> w(len);
    for (std::size_t m = 0; m < len; ++m) {
      w[m] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(len));
      wsum += w[m];
    }
    const double omega = 2.0 * std::numbers::pi * fk / config_.sample_rate;
    for (std::size_t m = 0; m < len; ++m) {
      kern.cos[m] = w[m] * std::cos(omega * static_cast<double>(m)) / wsum;
      kern.sin[m] = -w[m] * std::sin(omega * static_cast<double>(m)) / wsum;
    }
    max_length_ = std::max(max_length_, len);
  }
}

Spectrogram CqtExtractor::operator()(const AudioClip& clip) const {
  require_rate(clip, config_.sample_rate, "cqt");
  const std::size_t n = clip.samples.size();
  if (n == 0) throw std::invalid_argument("cqt: empty clip");
  const std::size_t frames = (n + config_.hop - 1) / config_.hop;
  const std::size_t half = max_length_ / 2 + 1;

  // Periodic extension: ext[j] = x[(j - half) mod n].
  std::vector<double> ext(n + 2 * half);
  for (std::size_t j = 0; j < ext.size(); ++j) {
    const std::size_t src = (j + n * (half / n + 1) - half) % n;
    ext[j] = clip.samples[src];
  }

  Spectrogram out(kernels_.size(), frames);
  out.hop = config_.hop;
  out.kind = SpectrogramKind::cqt_magnitude;
  out.bin_frequencies.resize(kernels_.size());
  for (std::size_t k = 0; k < kernels_.size(); ++k) out.bin_frequencies[k] = config_.bin_frequency(k);

  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t center = t * config_.hop + half;
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      const Kernel& kern = kernels_[k];
      const std::size_t len = kern.cos.size();
      const double* x = ext.data() + center - len / 2;
      double re = 0.0;
      double im = 0.0;
      for (std::size_t m = 0; m < len; ++m) {
        re += x[m] * kern.cos[m];
        im += x[m] * kern.sin[m];
      }
      out.at(k, t) = std::sqrt(re * re + im * im);
    }
  }
  return out;
}

Spectrogram cqt(const AudioClip& clip, const CqtConfig& config) { return CqtExtractor(config)(clip); }

// ---------------------------------------------------------------------------
// 2DFT

FeatureVector two_dft(const Spectrogram& spec) {
  if (spec.empty() || spec.bins == 0 || spec.frames == 0) throw std::invalid_argument("two_dft: empty spectrogram");
  if (spec.values.size() != spec.bins * spec.frames) throw std::invalid_argument("two_dft: inconsistent shape");
  std::vector<std::complex<double>> in(spec.values.begin(), spec.values.end());
  std::vector<std::complex<double>> out(in.size());
  fft::forward_2d(spec.bins, spec.frames, in, out);
  FeatureVector fv;
  fv.values.resize(out.size());
  std::transform(out.begin(), out.end(), fv.values.begin(), [](const auto& c) { return std::abs(c); });
  return fv;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

BaselineFeaturizer::BaselineFeaturizer(BaselineConfig config) : config_(config), cqt_(config.cqt) {}

FeatureVector BaselineFeaturizer::operator()(const AudioClip& clip) const {
  Spectrogram spec = cqt_(clip);
  if (config_.log_compress) {
    for (double& v : spec.values) v = std::log1p(v);
  }
  return two_dft(spec);
}

FeatureVector baseline_features(const AudioClip& clip, const BaselineConfig& config) {
  return BaselineFeaturizer(config)(clip);
}

double baseline_similarity(const AudioClip& a, const AudioClip& v, const BaselineConfig& config) {
  const BaselineFeaturizer featurize(config);
  const FeatureVector fa = featurize(a);
  const FeatureVector fv = featurize(v);
  if (fa.values.size() != fv.values.size()) {
    throw std::invalid_argument("baseline_similarity: clips must be conformed to the same length");
  }
  return cosine_similarity(fa.values, fv.values);
}

}  // namespace qbv
