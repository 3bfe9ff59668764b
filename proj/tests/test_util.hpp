#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "qbv/audio_io.hpp"
#include "qbv/dsp.hpp"

namespace qbv::test {

inline constexpr double kPi = 3.14159265358979323846;

inline AudioClip sine(double freq, int rate, double seconds, double amp = 0.5, std::string id = "sine") {
  AudioClip c;
  c.id = std::move(id);
  c.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = static_cast<float>(amp * std::sin(2.0 * kPi * freq * i / rate));
  return c;
}

inline AudioClip noise(int rate, std::size_t n, std::uint64_t seed, double amp = 0.3, std::string id = "noise") {
  AudioClip c;
  c.id = std::move(id);
  c.sample_rate = rate;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  c.samples.resize(n);
  for (auto& s : c.samples) s = static_cast<float>(u(rng));
  return c;
}

// Hand-assembled RIFF/WAVE with interleaved 16-bit PCM frames.
inline std::vector<std::uint8_t> pcm16_wav(const std::vector<std::int16_t>& interleaved, int channels, int rate) {
  std::vector<std::uint8_t> b;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  tag("RIFF");
  u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  tag("data");
  u32(data_bytes);
  for (std::int16_t s : interleaved) u16(static_cast<std::uint16_t>(s));
  return b;
}

// O(n^2) DFT magnitude.
inline std::vector<double> dft_magnitude(const std::vector<float>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) acc += static_cast<double>(x[t]) * std::polar(1.0, -2.0 * kPi * k * t / n);
    out[k] = std::abs(acc);
  }
  return out;
}

inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) if (v[i] > v[best]) best = i;
  return best;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("qbv_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace qbv::test
