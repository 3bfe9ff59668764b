#include "qbv/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>

#include "qbv/errors.hpp"

namespace qbv {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void require(std::size_t n) const {
    if (remaining() < n) throw AudioDecodeError("truncated WAV data");
  }
  std::uint16_t u16() {
    require(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::string tag() {
    require(4);
    std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    require(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) {
    require(n);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

std::size_t samples_for(double seconds, int sample_rate) {
  return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes, int target_rate, std::string id) {
  if (target_rate <= 0) throw std::invalid_argument("target sample rate must be positive");
  ByteReader reader(bytes);
  if (bytes.size() < 12) throw AudioDecodeError("not a RIFF/WAVE file: too short");
  if (reader.tag() != "RIFF") throw AudioDecodeError("not a RIFF file");
  reader.u32();
  if (reader.tag() != "WAVE") throw AudioDecodeError("RIFF file is not WAVE");

  std::optional<FormatChunk> fmt;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  while (reader.remaining() >= 8) {
    const std::string tag = reader.tag();
    const std::uint32_t size = reader.u32();
    // Some writers put a bogus size on the data chunk of a stream; clamp it.
    const std::size_t usable = std::min<std::size_t>(size, reader.remaining());
    if (tag == "fmt ") {
      auto body = ByteReader(reader.take(usable));
      FormatChunk f;
      f.format = body.u16();
      f.channels = body.u16();
      f.sample_rate = body.u32();
      body.u32();  // byte rate
      body.u16();  // block align
      f.bits_per_sample = body.u16();
      if (f.format == kFormatExtensible) {
        if (body.remaining() < 2 + 22) throw AudioDecodeError("truncated WAVE_FORMAT_EXTENSIBLE header");
        body.u16();
        body.u16();
        body.u32();
        f.format = body.u16();  // first two bytes of the subformat GUID
      }
      fmt = f;
    } else if (tag == "data") {
      data = reader.take(usable);
      have_data = true;
    } else {
      reader.skip(usable);
    }
    if (usable % 2 == 1 && reader.remaining() > 0) reader.skip(1);
  }
  if (!fmt) throw AudioDecodeError("WAV file has no fmt chunk");
  if (!have_data) throw AudioDecodeError("WAV file has no data chunk");
  if (fmt->channels == 0) throw AudioDecodeError("WAV file declares zero channels");
  if (fmt->sample_rate == 0) throw AudioDecodeError("WAV file declares zero sample rate");

  const bool pcm16 = fmt->format == kFormatPcm && fmt->bits_per_sample == 16;
  const bool f32 = fmt->format == kFormatFloat && fmt->bits_per_sample == 32;
  if (!pcm16 && !f32) {
    throw AudioDecodeError("unsupported WAV codec (format " + std::to_string(fmt->format) + ", " +
                           std::to_string(fmt->bits_per_sample) + " bit)");
  }
  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) throw AudioDecodeError("WAV file contains no audio frames");

  std::vector<float> mono(frames, 0.0F);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt->channels; ++c) {
      const std::uint8_t* p = data.data() + i * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (pcm16) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
        v = raw / 32768.0;
      } else {
        std::uint32_t bitsv = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                              (static_cast<std::uint32_t>(p[2]) << 16) |
                              (static_cast<std::uint32_t>(p[3]) << 24);
        float f = std::bit_cast<float>(bitsv);
        v = std::isfinite(f) ? std::clamp(static_cast<double>(f), -1.0, 1.0) : 0.0;
      }
      acc += v;
    }
    mono[i] = static_cast<float>(acc / fmt->channels);
  }

  AudioClip clip;
  clip.id = std::move(id);
  clip.sample_rate = target_rate;
  clip.samples = static_cast<int>(fmt->sample_rate) == target_rate
                     ? std::move(mono)
                     : resample_linear(mono, static_cast<int>(fmt->sample_rate), target_rate);
  if (clip.samples.empty()) throw AudioDecodeError("audio is empty after resampling");
  return clip;
}

AudioClip load_audio(const std::filesystem::path& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioDecodeError("cannot open audio file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, target_rate, path.stem().string());
  } catch (const AudioDecodeError& e) {
    throw AudioDecodeError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding) {
  if (clip.sample_rate <= 0) throw std::invalid_argument("clip has no sample rate");
  const bool pcm16 = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : clip.samples) {
    if (pcm16) {
      const double scaled = std::clamp(static_cast<double>(s), -1.0, 1.0) * 32767.0;
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(scaled))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(s));
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  const auto bytes = encode_wav(clip, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> resample_linear(std::span<const float> input, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw std::invalid_argument("sample rates must be positive");
  if (from_rate == to_rate) return {input.begin(), input.end()};
  if (input.empty()) return {};
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(input.size()) * to_rate / static_cast<double>(from_rate)));
  std::vector<float> out(out_len);
  const double step = static_cast<double>(from_rate) / to_rate;
  const std::size_t last = input.size() - 1;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto k = static_cast<std::size_t>(pos);
    if (k >= last) {
      out[i] = input[last];
      continue;
    }
    const double frac = pos - static_cast<double>(k);
    out[i] = static_cast<float>(input[k] + frac * (static_cast<double>(input[k + 1]) - input[k]));
  }
  return out;
}

AudioClip conform_length(const AudioClip& clip, double target_seconds) {
  if (!(target_seconds > 0.0)) throw std::invalid_argument("target duration must be positive");
  if (clip.sample_rate <= 0) throw std::invalid_argument("clip has no sample rate");
  AudioClip out;
  out.id = clip.id;
  out.sample_rate = clip.sample_rate;
  const std::size_t n = samples_for(target_seconds, clip.sample_rate);
  out.samples.assign(n, 0.0F);
  const std::size_t keep = std::min(n, clip.samples.size());
  std::copy_n(clip.samples.begin(), keep, out.samples.begin());
  return out;
}

}  // namespace qbv
