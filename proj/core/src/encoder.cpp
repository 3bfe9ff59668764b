#include "qbv/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "qbv/errors.hpp"
#include "qbv/random.hpp"

namespace qbv {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kTaps = kKernel * kKernel;
const std::array<std::string, 3> kConvNames{"conv1", "conv2", "conv3"};

// out[o] += sum_c w[o][c] * in[c], 3x3 taps, zero padding of one.
void conv3x3_forward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                     const double* bias, std::size_t cout, double* out) {
  const std::size_t plane = h * w;
  for (std::size_t o = 0; o < cout; ++o) {
    double* dst = out + o * plane;
    std::fill(dst, dst + plane, bias[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      const double* src = in + c * plane;
      const double* k = weight + (o * cin + c) * kTaps;
      for (std::size_t ky = 0; ky < kKernel; ++ky) {
        const std::size_t y0 = ky == 0 ? 1 : 0;
        const std::size_t y1 = ky == 2 ? h - 1 : h;
        for (std::size_t kx = 0; kx < kKernel; ++kx) {
          const double wt = k[ky * kKernel + kx];
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            double* drow = dst + y * w;
            const double* srow = src + (y + ky - 1) * w + kx - 1;
            for (std::size_t x = x0; x < x1; ++x) drow[x] += wt * srow[x];
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients and, when din != nullptr, the input gradient.
void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                      const double* dout, std::size_t cout, double* dweight, double* dbias, double* din) {
  const std::size_t plane = h * w;
  for (std::size_t o = 0; o < cout; ++o) {
    const double* g = dout + o * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
    dbias[o] += bsum;
    for (std::size_t c = 0; c < cin; ++c) {
      const double* src = in + c * plane;
      const double* k = weight + (o * cin + c) * kTaps;
      double* dk = dweight + (o * cin + c) * kTaps;
      double* dsrc = din != nullptr ? din + c * plane : nullptr;
      for (std::size_t ky = 0; ky < kKernel; ++ky) {
        const std::size_t y0 = ky == 0 ? 1 : 0;
        const std::size_t y1 = ky == 2 ? h - 1 : h;
        for (std::size_t kx = 0; kx < kKernel; ++kx) {
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          const double wt = k[ky * kKernel + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* grow = g + y * w;
            const double* srow = src + (y + ky - 1) * w + kx - 1;
            for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (dsrc != nullptr) {
              double* drow = dsrc + (y + ky - 1) * w + kx - 1;
              for (std::size_t x = x0; x < x1; ++x) drow[x] += wt * grow[x];
            }
          }
          dk[ky * kKernel + kx] += acc;
        }
      }
    }
  }
}

void check_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite activation in ") + where);
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_bins < 8 || input_frames < 8) {
    throw std::invalid_argument("encoder: input must be at least 8 x 8 (three 2x2 poolings)");
  }
  for (std::size_t c : channels) {
    if (c == 0) throw std::invalid_argument("encoder: channel widths must be positive");
  }
  if (embedding_dim == 0) throw std::invalid_argument("encoder: embedding_dim must be positive");
  if (!(input_scale > 0.0)) throw std::invalid_argument("encoder: input_scale must be positive");
}

EncoderParams::EncoderParams(EncoderConfig config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    const std::size_t size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    layout_.push_back({std::move(name), std::move(shape), offset, size});
    offset += size;
  };
  std::size_t cin = 1;
  for (std::size_t l = 0; l < 3; ++l) {
    add(kConvNames[l] + ".weight", {config_.channels[l], cin, kKernel, kKernel});
    add(kConvNames[l] + ".bias", {config_.channels[l]});
    cin = config_.channels[l];
  }
  add("proj.weight", {config_.embedding_dim, cin});
  add("proj.bias", {config_.embedding_dim});
  values_.assign(offset, 0.0);
}

const ParamArray& EncoderParams::find(std::string_view name) const {
  for (const auto& a : layout_) {
    if (a.name == name) return a;
  }
  throw std::out_of_range("encoder has no parameter array named " + std::string(name));
}

std::span<double> EncoderParams::array(std::string_view name) {
  const auto& a = find(name);
  return std::span<double>(values_).subspan(a.offset, a.size);
}

std::span<const double> EncoderParams::array(std::string_view name) const {
  const auto& a = find(name);
  return std::span<const double>(values_).subspan(a.offset, a.size);
}

EncoderParams init_encoder(std::uint64_t seed, const EncoderConfig& config) {
  EncoderParams params(config);
  Rng rng(seed);
  for (const auto& a : params.layout()) {
    if (a.name.ends_with(".bias")) continue;
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < a.shape.size(); ++i) fan_in *= a.shape[i];
    const double bound = a.name.starts_with("proj") ? std::sqrt(3.0 / static_cast<double>(fan_in))
                                                     : std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : params.array(a.name)) v = dist(rng);
  }
  return params;
}

EncoderTape encode_with_tape(const EncoderParams& params, const Spectrogram& spec, bool normalize) {
  const EncoderConfig& cfg = params.config();
  if (spec.bins != cfg.input_bins || spec.frames != cfg.input_frames ||
      spec.values.size() != spec.bins * spec.frames) {
    throw std::invalid_argument("encode: spectrogram is " + std::to_string(spec.bins) + "x" +
                                std::to_string(spec.frames) + ", encoder expects " + std::to_string(cfg.input_bins) +
                                "x" + std::to_string(cfg.input_frames));
  }
  EncoderTape tape;
  tape.normalize = normalize;

  std::vector<double> current(spec.values.size());
  std::transform(spec.values.begin(), spec.values.end(), current.begin(),
                 [&](double x) { return (x + cfg.input_shift) / cfg.input_scale; });
  std::size_t cin = 1;
  std::size_t h = cfg.input_bins;
  std::size_t w = cfg.input_frames;

  for (std::size_t l = 0; l < 3; ++l) {
    auto& blk = tape.blocks[l];
    const std::size_t cout = cfg.channels[l];
    blk.in_channels = cin;
    blk.out_channels = cout;
    blk.height = h;
    blk.width = w;
    blk.input = std::move(current);
    blk.preact.assign(cout * h * w, 0.0);
    const auto wt = params.array(kConvNames[l] + ".weight");
    const auto bs = params.array(kConvNames[l] + ".bias");
    conv3x3_forward(blk.input.data(), cin, h, w, wt.data(), bs.data(), cout, blk.preact.data());

    const std::size_t ph = h / 2;
    const std::size_t pw = w / 2;
    current.assign(cout * ph * pw, 0.0);
    blk.argmax.assign(cout * ph * pw, 0);
    for (std::size_t c = 0; c < cout; ++c) {
      const double* z = blk.preact.data() + c * h * w;
      for (std::size_t y = 0; y < ph; ++y) {
        for (std::size_t x = 0; x < pw; ++x) {
          std::size_t best = (2 * y) * w + 2 * x;
          for (std::size_t idx : {(2 * y) * w + 2 * x + 1, (2 * y + 1) * w + 2 * x, (2 * y + 1) * w + 2 * x + 1}) {
            if (z[idx] > z[best]) best = idx;
          }
          const std::size_t o = (c * ph + y) * pw + x;
          blk.argmax[o] = c * h * w + best;
          current[o] = std::max(z[best], 0.0);  // relu(max) == max(relu)
        }
      }
    }
    cin = cout;
    h = ph;
    w = pw;
  }
  tape.pooled_height = h;
  tape.pooled_width = w;

  const std::size_t channels = cfg.channels[2];
  tape.pooled_mean.assign(channels, 0.0);
  const double inv = 1.0 / static_cast<double>(h * w);
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) acc += current[c * h * w + i];
    tape.pooled_mean[c] = acc * inv;
  }

  const std::size_t dim = cfg.embedding_dim;
  const auto pw_ = params.array("proj.weight");
  const auto pb = params.array("proj.bias");
  tape.raw.assign(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    double acc = pb[d];
    for (std::size_t c = 0; c < channels; ++c) acc += pw_[d * channels + c] * tape.pooled_mean[c];
    tape.raw[d] = acc;
  }
  check_finite(tape.raw, "encoder projection");

  tape.output.values = tape.raw;
  tape.output.normalized = normalize;
  double sq = 0.0;
  for (double v : tape.raw) sq += v * v;
  tape.raw_norm = std::sqrt(sq);
  if (normalize && tape.raw_norm > 0.0) {
    for (double& v : tape.output.values) v /= tape.raw_norm;
  }
  return tape;
}

Embedding encode(const EncoderParams& params, const Spectrogram& spec, bool normalize) {
  return encode_with_tape(params, spec, normalize).output;
}

std::vector<Embedding> encode_batch(const EncoderParams& params, std::span<const Spectrogram> specs, bool normalize) {
  std::vector<Embedding> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(encode(params, s, normalize));
  return out;
}

void encode_backward(const EncoderParams& params, const EncoderTape& tape, std::span<const double> upstream,
                     std::span<double> grad) {
  const EncoderConfig& cfg = params.config();
  const std::size_t dim = cfg.embedding_dim;
  if (upstream.size() != dim) throw std::invalid_argument("encode_backward: upstream gradient has wrong length");
  if (grad.size() != params.parameter_count()) throw std::invalid_argument("encode_backward: gradient buffer size");

  // Through the optional l2 normalization: d raw = (g - y <y, g>) / |raw|.
  std::vector<double> draw(upstream.begin(), upstream.end());
  if (tape.normalize && tape.raw_norm > 0.0) {
    const auto& y = tape.output.values;
    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += y[d] * upstream[d];
    for (std::size_t d = 0; d < dim; ++d) draw[d] = (upstream[d] - y[d] * dot) / tape.raw_norm;
  }

  auto slice = [&](std::string_view name) {
    const auto& a = params.find(name);
    return grad.subspan(a.offset, a.size);
  };

  const std::size_t channels = cfg.channels[2];
  const auto proj_w = params.array("proj.weight");
  auto g_proj_w = slice("proj.weight");
  auto g_proj_b = slice("proj.bias");
  std::vector<double> dmean(channels, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    g_proj_b[d] += draw[d];
    for (std::size_t c = 0; c < channels; ++c) {
      g_proj_w[d * channels + c] += draw[d] * tape.pooled_mean[c];
      dmean[c] += draw[d] * proj_w[d * channels + c];
    }
  }

  // Gradient w.r.t. the pooled output of the current block.
  const std::size_t area = tape.pooled_height * tape.pooled_width;
  std::vector<double> dpooled(channels * area);
  for (std::size_t c = 0; c < channels; ++c) {
    std::fill_n(dpooled.begin() + static_cast<std::ptrdiff_t>(c * area), area,
                dmean[c] / static_cast<double>(area));
  }

  for (std::size_t li = 3; li-- > 0;) {
    const auto& blk = tape.blocks[li];
    std::vector<double> dz(blk.preact.size(), 0.0);
    for (std::size_t o = 0; o < blk.argmax.size(); ++o) {
      const std::size_t src = blk.argmax[o];
      if (blk.preact[src] > 0.0) dz[src] += dpooled[o];
    }
    auto g_w = slice(kConvNames[li] + ".weight");
    auto g_b = slice(kConvNames[li] + ".bias");
    const auto wt = params.array(kConvNames[li] + ".weight");
    std::vector<double> din;
    if (li > 0) din.assign(blk.input.size(), 0.0);
    conv3x3_backward(blk.input.data(), blk.in_channels, blk.height, blk.width, wt.data(), dz.data(),
                     blk.out_channels, g_w.data(), g_b.data(), li > 0 ? din.data() : nullptr);
    dpooled = std::move(din);
  }
}

std::vector<double> encode_backward(const EncoderParams& params, const Spectrogram& spec,
                                    std::span<const double> upstream, bool normalize) {
  const EncoderTape tape = encode_with_tape(params, spec, normalize);
  std::vector<double> grad(params.parameter_count(), 0.0);
  encode_backward(params, tape, upstream, grad);
  return grad;
}

DualEncoder DualEncoder::create(const EncoderConfig& config, std::uint64_t seed, bool shared) {
  DualEncoder enc;
  enc.towers_.push_back(init_encoder(seed, config));
  if (!shared) enc.towers_.push_back(enc.towers_.front());
  return enc;
}

DualEncoder DualEncoder::from_towers(EncoderParams reference, EncoderParams imitation) {
  if (!(reference.config() == imitation.config())) {
    throw std::invalid_argument("dual encoder towers must share one configuration");
  }
  DualEncoder enc;
  enc.towers_.push_back(std::move(reference));
  enc.towers_.push_back(std::move(imitation));
  return enc;
}

DualEncoder DualEncoder::from_shared(EncoderParams params) {
  DualEncoder enc;
  enc.towers_.push_back(std::move(params));
  return enc;
}

}  // namespace qbv
