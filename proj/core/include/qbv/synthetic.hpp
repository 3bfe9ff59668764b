#pragma once

// Synthetic paired data: each class is a tone, amplitude-modulated or
// noise-band recipe. The reference is a clean rendering; imitations are
// pitch-jittered, delayed and noisy renderings of the same recipe.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "qbv/audio_io.hpp"
#include "qbv/manifest.hpp"

namespace qbv {

struct SyntheticConfig {
  std::size_t n_classes = 32;
  std::size_t imitations_per_class = 4;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double duration_seconds = 1.0;
  std::size_t n_folds = 10;
  std::size_t max_hard_negatives = 9;
  /// Relative pitch jitter bound for imitations.
  double pitch_jitter = 0.03;
  /// Imitation onset delay is uniform in [0, max_delay_seconds].
  double max_delay_seconds = 0.1;
  double snr_min_db = 10.0;
  double snr_max_db = 20.0;

  void validate() const;
};

enum class RecipeFamily { tone, am, noise_band };

struct SyntheticDataset {
  Manifest manifest;
  std::vector<AudioClip> references;
  std::vector<AudioClip> imitations;
  std::vector<RecipeFamily> families;  // per reference
};

/// Deterministic per seed. Folds are assigned round-robin; hard negatives are
/// the nearest same-family classes. Manifest paths are "refs/<id>.wav" and
/// "imits/<id>.wav".
SyntheticDataset gen_synthetic(const SyntheticConfig& config);

/// Writes every clip as float WAV under `dir` plus `dir/manifest.jsonl`.
/// Returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace qbv
