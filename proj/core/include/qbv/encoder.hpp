#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qbv/dsp.hpp"

namespace qbv {

/// Desk-scale convolutional encoder: three blocks of 3x3 conv (same padding),
/// ReLU and 2x2 max pooling, then global average pooling and a linear
/// projection to embedding_dim. Inputs are shifted and scaled before the first
/// conv: x' = (x + input_shift) / input_scale.
struct EncoderConfig {
  std::size_t input_bins = 128;
  std::size_t input_frames = 998;
  std::array<std::size_t, 3> channels{16, 32, 64};
  std::size_t embedding_dim = 128;
  double input_shift = 4.5;
  double input_scale = 5.0;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct ParamArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// All encoder weights in one flat buffer, addressed through a fixed layout.
/// Gradients use the same layout (a vector of parameter_count() doubles).
class EncoderParams {
 public:
  EncoderParams() = default;
  explicit EncoderParams(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  std::size_t parameter_count() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<ParamArray>& layout() const { return layout_; }

  const ParamArray& find(std::string_view name) const;
  std::span<double> array(std::string_view name);
  std::span<const double> array(std::string_view name) const;

  bool operator==(const EncoderParams& other) const {
    return config_ == other.config_ && values_ == other.values_;
  }

 private:
  EncoderConfig config_;
  std::vector<ParamArray> layout_;
  std::vector<double> values_;
};

/// Fan-in-scaled uniform init: conv weights U(+-sqrt(6/fan_in)), projection
/// U(+-sqrt(3/fan_in)), biases zero. Same seed gives identical parameters.
EncoderParams init_encoder(std::uint64_t seed, const EncoderConfig& config);

struct Embedding {
  std::vector<double> values;
  bool normalized = false;
};

/// Activations recorded by a forward pass, consumed by encode_backward.
struct EncoderTape {
  struct Block {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> input;     // in_channels x height x width
    std::vector<double> preact;    // out_channels x height x width
    std::vector<std::size_t> argmax;  // out_channels x (height/2) x (width/2), index into preact
  };
  std::array<Block, 3> blocks;
  std::size_t pooled_height = 0;
  std::size_t pooled_width = 0;
  std::vector<double> pooled_mean;  // global average of the last block, channels[2]
  std::vector<double> raw;          // projection output before normalization
  double raw_norm = 0.0;
  bool normalize = false;
  Embedding output;
};

/// Forward pass. Throws std::invalid_argument on shape mismatch and
/// DivergenceError if a non-finite value appears.
Embedding encode(const EncoderParams& params, const Spectrogram& spec, bool normalize);
std::vector<Embedding> encode_batch(const EncoderParams& params, std::span<const Spectrogram> specs, bool normalize);

EncoderTape encode_with_tape(const EncoderParams& params, const Spectrogram& spec, bool normalize);

/// Reverse-mode gradient of <upstream, encode(spec)> with respect to every
/// parameter, added into grad (length parameter_count()).
void encode_backward(const EncoderParams& params, const EncoderTape& tape, std::span<const double> upstream,
                     std::span<double> grad);

std::vector<double> encode_backward(const EncoderParams& params, const Spectrogram& spec,
                                    std::span<const double> upstream, bool normalize);

enum class Tower { reference, imitation };

/// The pair (phi_a, phi_v). In shared mode both towers alias one parameter
/// set. Both towers start from the same initialization, mirroring two copies
/// of one pre-trained checkpoint.
class DualEncoder {
 public:
  DualEncoder() = default;
  static DualEncoder create(const EncoderConfig& config, std::uint64_t seed, bool shared);
  static DualEncoder from_towers(EncoderParams reference, EncoderParams imitation);
  static DualEncoder from_shared(EncoderParams params);

  bool shared() const { return towers_.size() == 1; }
  const EncoderConfig& config() const { return towers_.front().config(); }
  const EncoderParams& tower(Tower t) const { return towers_[index(t)]; }
  EncoderParams& tower(Tower t) { return towers_[index(t)]; }

  /// Distinct parameter sets: 1 when shared, 2 otherwise.
  std::size_t parameter_set_count() const { return towers_.size(); }
  EncoderParams& parameter_set(std::size_t i) { return towers_.at(i); }
  const EncoderParams& parameter_set(std::size_t i) const { return towers_.at(i); }
  std::size_t index(Tower t) const { return shared() || t == Tower::reference ? 0 : 1; }

 private:
  std::vector<EncoderParams> towers_;
};

}  // namespace qbv
