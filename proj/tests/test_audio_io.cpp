#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "qbv/audio_io.hpp"
#include "qbv/errors.hpp"
#include "test_util.hpp"

using namespace qbv;
using namespace qbv::test;

TEST(AudioIo, SilenceResampledIsZeros) {
  const std::vector<std::int16_t> zeros(44100, 0);
  const AudioClip c = decode_wav(pcm16_wav(zeros, 1, 44100), 32000);
  ASSERT_EQ(c.samples.size(), 32000u);
  EXPECT_EQ(c.sample_rate, 32000);
  for (float s : c.samples) ASSERT_EQ(s, 0.0f);
}

TEST(AudioIo, StereoOppositeChannelsAverageToZero) {
  std::vector<std::int16_t> frames;
  for (int i = 0; i < 1000; ++i) {
    frames.push_back(16384);
    frames.push_back(-16384);
  }
  const AudioClip c = decode_wav(pcm16_wav(frames, 2, 16000), 16000);
  ASSERT_EQ(c.samples.size(), 1000u);
  for (float s : c.samples) ASSERT_EQ(s, 0.0f);
}

TEST(AudioIo, Pcm16Scaling) {
  const AudioClip c = decode_wav(pcm16_wav({16384, -32768, 0}, 1, 8000), 8000);
  ASSERT_EQ(c.samples.size(), 3u);
  EXPECT_FLOAT_EQ(c.samples[0], 0.5f);
  EXPECT_FLOAT_EQ(c.samples[1], -1.0f);
  EXPECT_FLOAT_EQ(c.samples[2], 0.0f);
}

TEST(AudioIo, UpsampledSineKeepsPeakFrequency) {
  const AudioClip in = sine(440.0, 16000, 0.25);
  const std::vector<float> up = resample_linear(in.samples, 16000, 32000);
  ASSERT_EQ(up.size(), 8000u);
  // bin spacing = rate / n = 4 Hz in both cases
  const std::size_t before = argmax(dft_magnitude(in.samples));
  const std::size_t after = argmax(dft_magnitude(up));
  const double hz_before = before * 16000.0 / in.samples.size();
  const double hz_after = after * 32000.0 / up.size();
  EXPECT_NEAR(hz_before, 440.0, 4.0);
  EXPECT_NEAR(hz_after, 440.0, 4.0);
  EXPECT_LE(std::abs(static_cast<long>(before) - static_cast<long>(after)), 1);
}

TEST(AudioIo, WavRoundTripFloatIsExact) {
  const AudioClip c = noise(22050, 777, 3);
  const AudioClip back = decode_wav(encode_wav(c, WavEncoding::float32), 22050);
  EXPECT_EQ(back.samples, c.samples);
}

TEST(AudioIo, WavRoundTripPcm16WithinQuantization) {
  const AudioClip c = noise(8000, 500, 4);
  const AudioClip back = decode_wav(encode_wav(c, WavEncoding::pcm16), 8000);
  ASSERT_EQ(back.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) ASSERT_NEAR(back.samples[i], c.samples[i], 1.0 / 32767.0);
}

TEST(AudioIo, DecodeErrors) {
  const std::vector<std::uint8_t> junk{'R', 'I', 'F', 'X', 0, 0, 0, 0};
  EXPECT_THROW(decode_wav(junk, 16000), AudioDecodeError);
  EXPECT_THROW(decode_wav(pcm16_wav({}, 1, 16000), 16000), AudioDecodeError);
  auto bytes = pcm16_wav({1, 2, 3, 4}, 1, 16000);
  bytes[20] = 3;  // IEEE float tag with 16-bit samples is unsupported
  EXPECT_THROW(decode_wav(bytes, 16000), AudioDecodeError);
  bytes = pcm16_wav({1, 2, 3, 4}, 1, 16000);
  bytes.resize(30);
  EXPECT_THROW(decode_wav(bytes, 16000), AudioDecodeError);
  EXPECT_THROW(load_audio("/nonexistent/x.wav", 16000), AudioDecodeError);
}

TEST(AudioIo, LoadAudioIdIsStem) {
  TempDir dir;
  const auto p = dir.path / "clip_7.wav";
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(pcm16_wav({0, 100}, 1, 8000).data()), 48);
  const AudioClip c = load_audio(p, 8000);
  EXPECT_EQ(c.id, "clip_7");
  EXPECT_EQ(c.samples.size(), 2u);
}

TEST(ConformLength, TruncatesKeepingHead) {
  const AudioClip c = noise(100, 1200, 5);
  const AudioClip out = conform_length(c, 10.0);
  ASSERT_EQ(out.samples.size(), 1000u);
  EXPECT_TRUE(std::equal(out.samples.begin(), out.samples.end(), c.samples.begin()));
}

TEST(ConformLength, ExactLengthIsIdentity) {
  const AudioClip c = noise(100, 1000, 6);
  EXPECT_EQ(conform_length(c, 10.0).samples, c.samples);
}

TEST(ConformLength, PadsZerosAtTail) {
  const AudioClip c = noise(32000, 96000, 7);
  const AudioClip out = conform_length(c, 10.0);
  ASSERT_EQ(out.samples.size(), 320000u);
  EXPECT_TRUE(std::equal(c.samples.begin(), c.samples.end(), out.samples.begin()));
  EXPECT_EQ(std::count(out.samples.begin() + 96000, out.samples.end(), 0.0f), 224000);
}

TEST(ConformLength, PropertiesOverRandomClips) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 3000;
    const double target = 0.01 + (rng() % 300) / 100.0;
    const AudioClip c = noise(1000, n, rng());
    const AudioClip once = conform_length(c, target);
    ASSERT_EQ(once.samples.size(), static_cast<std::size_t>(std::llround(target * 1000)));
    EXPECT_EQ(conform_length(once, target).samples, once.samples);
    double e_in = 0.0, e_out = 0.0;
    for (float s : c.samples) e_in += double(s) * s;
    for (float s : once.samples) {
      ASSERT_TRUE(std::isfinite(s));
      e_out += double(s) * s;
    }
    EXPECT_LE(e_out, e_in + 1e-12);
  }
}

TEST(Resample, LengthRule) {
  EXPECT_EQ(resample_linear(std::vector<float>(441, 0.1f), 44100, 32000).size(), 320u);
  const std::vector<float> x{0.1f, 0.2f, 0.3f};
  EXPECT_EQ(resample_linear(x, 8000, 8000), x);
}
