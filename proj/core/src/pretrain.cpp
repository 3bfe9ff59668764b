#include "qbv/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "qbv/random.hpp"

namespace qbv {

void PretrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("pretrain: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("pretrain: batch size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("pretrain: lr must be positive");
}

LinearClassifier LinearClassifier::init(std::size_t n_classes, std::size_t dim, std::uint64_t seed) {
  if (n_classes < 2 || dim == 0) throw std::invalid_argument("classifier: need >= 2 classes and a positive dim");
  LinearClassifier c;
  c.n_classes = n_classes;
  c.dim = dim;
  c.values.assign(n_classes * dim + n_classes, 0.0);
  Rng rng(seed);
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t k = 0; k < n_classes * dim; ++k) c.values[k] = u(rng);
  return c;
}

std::vector<double> LinearClassifier::logits(std::span<const double> z) const {
  if (z.size() != dim) throw std::invalid_argument("classifier: dimension mismatch");
  std::vector<double> out(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double acc = values[n_classes * dim + c];
    for (std::size_t j = 0; j < dim; ++j) acc += values[c * dim + j] * z[j];
    out[c] = acc;
  }
  return out;
}

double classifier_loss_and_gradients(const EncoderParams& params, const LinearClassifier& head,
                                     std::span<const Spectrogram> specs, std::span<const std::size_t> labels,
                                     std::span<double> encoder_grad, std::span<double> head_grad,
                                     std::size_t* correct) {
  if (specs.size() != labels.size() || specs.empty()) throw std::invalid_argument("classifier: bad batch");
  if (encoder_grad.size() != params.parameter_count() || head_grad.size() != head.values.size()) {
    throw std::invalid_argument("classifier: gradient buffers have the wrong size");
  }
  const std::size_t C = head.n_classes;
  const std::size_t D = head.dim;
  const double inv_n = 1.0 / static_cast<double>(specs.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (labels[k] >= C) throw std::out_of_range("classifier: label out of range");
    const EncoderTape tape = encode_with_tape(params, specs[k], false);
    const std::vector<double>& z = tape.output.values;
    const std::vector<double> lo = head.logits(z);
    const double mx = *std::max_element(lo.begin(), lo.end());
    double se = 0.0;
    for (double v : lo) se += std::exp(v - mx);
    const double lse = mx + std::log(se);
    loss += (lse - lo[labels[k]]) * inv_n;
    if (correct != nullptr && static_cast<std::size_t>(std::max_element(lo.begin(), lo.end()) - lo.begin()) == labels[k]) {
      ++*correct;
    }
    std::vector<double> upstream(D, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double d = (std::exp(lo[c] - lse) - (c == labels[k] ? 1.0 : 0.0)) * inv_n;
      head_grad[C * D + c] += d;
      for (std::size_t j = 0; j < D; ++j) {
        head_grad[c * D + j] += d * z[j];
        upstream[j] += d * head.values[c * D + j];
      }
    }
    encode_backward(params, tape, upstream, encoder_grad);
  }
  return loss;
}

PretrainResult pretrain_encoder(const LabeledClips& data, const TrainingSetup& setup, const PretrainConfig& config,
                                const std::function<void(const PretrainEpoch&)>& on_epoch) {
  config.validate();
  setup.validate();
  if (data.clips.size() != data.labels.size() || data.clips.empty()) {
    throw std::invalid_argument("pretrain: clips and labels must be non-empty and aligned");
  }
  const FeaturePipeline pipe(setup.features);
  std::vector<Spectrogram> specs;
  specs.reserve(data.clips.size());
  for (const auto& c : data.clips) specs.push_back(pipe(c));

  const EncoderConfig ecfg = setup.encoder_config();
  PretrainResult result;
  result.params = init_encoder(config.seed, ecfg);
  LinearClassifier head = LinearClassifier::init(data.n_classes, ecfg.embedding_dim, derive_seed(config.seed, {0xC1A55}));
  AdamState enc_state;
  AdamState head_state;

  std::vector<std::size_t> order(specs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {epoch, 0xC1A55}));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(b + config.batch_size, order.size());
      std::vector<Spectrogram> batch;
      std::vector<std::size_t> labels;
      for (std::size_t k = b; k < e; ++k) {
        batch.push_back(specs[order[k]]);
        labels.push_back(data.labels[order[k]]);
      }
      std::vector<double> g(result.params.parameter_count(), 0.0);
      std::vector<double> hg(head.values.size(), 0.0);
      loss_sum += classifier_loss_and_gradients(result.params, head, batch, labels, g, hg, &correct) *
                  static_cast<double>(batch.size());
      seen += batch.size();
      adam_step(result.params.values(), g, enc_state, config.lr, config.beta1, config.beta2, config.adam_eps);
      adam_step(head.values, hg, head_state, config.lr, config.beta1, config.beta2, config.adam_eps);
    }
    const PretrainEpoch m{epoch, loss_sum / static_cast<double>(seen),
                          static_cast<double>(correct) / static_cast<double>(seen)};
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

LabeledClips labeled_clips(const Manifest& manifest, ClipStore& clips) {
  LabeledClips out;
  std::map<std::string, std::size_t> class_index;
  std::map<std::string, std::size_t> ref_label;
  for (const auto& r : manifest.references) {
    const std::string name = r.label.value_or(r.id);
    const auto [it, fresh] = class_index.emplace(name, class_index.size());
    ref_label[r.id] = it->second;
    out.clips.push_back(clips.get(r.id));
    out.labels.push_back(it->second);
  }
  for (const auto& m : manifest.imitations) {
    out.clips.push_back(clips.get(m.id));
    out.labels.push_back(ref_label.at(m.ref_id));
  }
  out.n_classes = class_index.size();
  return out;
}

QbvModel model_from_pretrained(const TrainingSetup& setup, const EncoderParams& params) {
  if (!(params.config() == setup.encoder_config())) {
    throw std::invalid_argument("pretrained encoder does not match the configured input shape");
  }
  QbvModel model = QbvModel::create(setup);
  model.encoders = setup.shared_encoder ? DualEncoder::from_shared(params) : DualEncoder::from_towers(params, params);
  return model;
}

}  // namespace qbv
