#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qbv {

inline constexpr int kDefaultSampleRate = 32000;
inline constexpr double kDefaultDurationSeconds = 10.0;

/// Mono waveform with amplitudes in [-1, 1].
struct AudioClip {
  std::string id;
  int sample_rate = 0;
  std::vector<float> samples;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class WavEncoding { pcm16, float32 };

/// Decodes a RIFF/WAVE byte buffer (PCM 16-bit or IEEE float 32-bit, any
/// channel count), averages channels to mono and resamples to target_rate.
/// Throws AudioDecodeError on malformed, unsupported or empty input.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, int target_rate, std::string id = {});

/// File wrapper around decode_wav. The clip id defaults to the file stem.
AudioClip load_audio(const std::filesystem::path& path, int target_rate);

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding = WavEncoding::float32);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::float32);

/// Linear-interpolation resampler. Output length is round(n * to / from).
/// No anti-alias filter is applied when downsampling.
std::vector<float> resample_linear(std::span<const float> input, int from_rate, int to_rate);

/// Truncates (keeping the head) or zero-pads (at the tail) to exactly
/// round(target_seconds * sample_rate) samples.
AudioClip conform_length(const AudioClip& clip, double target_seconds);

std::size_t samples_for(double seconds, int sample_rate);

}  // namespace qbv
