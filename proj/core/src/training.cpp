#include "qbv/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "qbv/errors.hpp"
#include "qbv/metrics.hpp"
#include "qbv/random.hpp"

namespace qbv {

// ---------------------------------------------------------------------------
// Features

std::size_t FeatureConfig::frames() const {
  return log_mel_frames(samples_for(duration_seconds, logmel.sample_rate), logmel);
}

void FeatureConfig::validate() const {
  if (!(duration_seconds > 0.0)) throw std::invalid_argument("features: duration must be positive");
  logmel.validate();
  if (frames() == 0) throw std::invalid_argument("features: clip duration is shorter than one analysis window");
}

FeaturePipeline::FeaturePipeline(FeatureConfig config) : config_(config), extractor_((config.validate(), config.logmel)) {}

AudioClip FeaturePipeline::conform(const AudioClip& clip) const {
  if (clip.sample_rate != config_.sample_rate()) {
    throw std::invalid_argument("feature pipeline: clip '" + clip.id + "' has sample rate " +
                                std::to_string(clip.sample_rate) + ", expected " +
                                std::to_string(config_.sample_rate()));
  }
  return conform_length(clip, config_.duration_seconds);
}

Spectrogram FeaturePipeline::operator()(const AudioClip& clip) const { return extractor_(conform(clip)); }

// ---------------------------------------------------------------------------
// Setup / model

EncoderConfig TrainingSetup::encoder_config() const {
  EncoderConfig cfg = encoder;
  cfg.input_bins = features.logmel.n_mels;
  cfg.input_frames = features.frames();
  return cfg;
}

void TrainingSetup::validate() const {
  train.validate();
  loss.validate();
  augment.validate();
  features.validate();
  encoder_config().validate();
}

QbvModel QbvModel::create(const TrainingSetup& setup) {
  setup.validate();
  QbvModel model;
  model.features = setup.features;
  model.loss = setup.loss;
  model.encoders = DualEncoder::create(setup.encoder_config(), setup.train.seed, setup.shared_encoder);
  if (setup.loss.head == SimilarityHead::fnn) {
    model.head = FnnHead::init(setup.encoder.embedding_dim, setup.loss.fnn_hidden,
                               derive_seed(setup.train.seed, {0xF00D}));
  }
  return model;
}

Embedding QbvModel::embed_spectrogram(Tower tower, const Spectrogram& spec) const {
  return encode(encoders.tower(tower), spec, false);
}

Embedding QbvModel::embed(Tower tower, const AudioClip& clip) const {
  return embed_spectrogram(tower, FeaturePipeline(features)(clip));
}

double QbvModel::score(const Embedding& ref, const Embedding& imit) const {
  if (uses_fnn()) {
    if (!head) throw std::logic_error("model configured for an FNN head but has none");
    return head->logit(ref.values, imit.values);
  }
  return cosine_similarity(ref.values, imit.values);
}

// ---------------------------------------------------------------------------
// Loss and gradients for one batch

double batch_loss_and_gradients(const QbvModel& model, std::span<const Spectrogram> ref_specs,
                                std::span<const Spectrogram> imit_specs, std::span<const PairLabel> bce_pairs,
                                std::vector<std::vector<double>>& grads, std::vector<double>* head_grad) {
  const std::size_t n = ref_specs.size();
  if (imit_specs.size() != n) throw std::invalid_argument("batch: reference/imitation counts differ");
  const DualEncoder& enc = model.encoders;
  grads.assign(enc.parameter_set_count(), {});
  for (std::size_t k = 0; k < grads.size(); ++k) grads[k].assign(enc.parameter_set(k).parameter_count(), 0.0);

  std::vector<EncoderTape> ref_tapes;
  std::vector<EncoderTape> imit_tapes;
  std::vector<Embedding> refs;
  std::vector<Embedding> imits;
  ref_tapes.reserve(n);
  imit_tapes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ref_tapes.push_back(encode_with_tape(enc.tower(Tower::reference), ref_specs[i], false));
    imit_tapes.push_back(encode_with_tape(enc.tower(Tower::imitation), imit_specs[i], false));
    refs.push_back(ref_tapes.back().output);
    imits.push_back(imit_tapes.back().output);
  }

  double loss = 0.0;
  EmbeddingGradients eg;
  const LossConfig& lc = model.loss;
  if (lc.objective == LossKind::bce && lc.head == SimilarityHead::fnn) {
    if (!model.head) throw std::logic_error("batch: FNN head missing");
    FnnBceResult r = fnn_bce_loss(refs, imits, *model.head, bce_pairs);
    loss = r.loss;
    eg = std::move(r.embedding_grads);
    if (head_grad != nullptr) *head_grad = std::move(r.head_grad);
  } else {
    const SimilarityMatrix s = similarity_matrix(refs, imits);
    const LossResult r = lc.objective == LossKind::nt_xent ? nt_xent_loss(s, lc) : cosine_bce_loss(s, bce_pairs, lc.bce_tau);
    loss = r.loss;
    eg = similarity_backward(refs, imits, s, r.grad);
  }
  if (!std::isfinite(loss)) throw DivergenceError("training loss is not finite");

  for (std::size_t i = 0; i < n; ++i) {
    encode_backward(enc.tower(Tower::reference), ref_tapes[i], eg.refs[i], grads[enc.index(Tower::reference)]);
    encode_backward(enc.tower(Tower::imitation), imit_tapes[i], eg.imits[i], grads[enc.index(Tower::imitation)]);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Validation

double validation_mrr(const QbvModel& model, const ValidationSet& validation) {
  if (validation.queries.size() != validation.targets.size()) {
    throw std::invalid_argument("validation: queries/targets length mismatch");
  }
  if (validation.queries.empty()) throw std::invalid_argument("validation: no queries");
  const FeaturePipeline pipe(model.features);
  std::vector<Embedding> cand;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < validation.candidates.size(); ++c) {
    cand.push_back(model.embed_spectrogram(Tower::reference, pipe(validation.candidates[c])));
    ids.push_back(validation.candidates[c].id);
  }
  std::vector<std::size_t> ranks;
  std::vector<double> scores(cand.size());
  for (std::size_t q = 0; q < validation.queries.size(); ++q) {
    const Embedding e = model.embed_spectrogram(Tower::imitation, pipe(validation.queries[q]));
    for (std::size_t c = 0; c < cand.size(); ++c) scores[c] = model.score(cand[c], e);
    ranks.push_back(rank_of_target(scores, ids, validation.targets[q]));
  }
  return mrr(ranks);
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const PairedDataset& data, const TrainingSetup& setup, QbvModel initial,
                  const ValidationSet* validation, const EpochCallback& on_epoch) {
  setup.validate();
  const TrainConfig& cfg = setup.train;
  const std::size_t n_refs = data.references.size();
  if (data.imitations.size() != n_refs) throw std::invalid_argument("train: imitations must be grouped per reference");
  if (n_refs < cfg.batch_size) {
    throw std::invalid_argument("train: dataset has " + std::to_string(n_refs) + " references, fewer than batch size " +
                                std::to_string(cfg.batch_size));
  }
  std::set<std::string> ids;
  for (const auto& r : data.references) {
    if (!ids.insert(r.id).second) {
      throw std::invalid_argument("train: duplicate reference '" + r.id + "' would share a batch with itself");
    }
  }
  for (std::size_t i = 0; i < n_refs; ++i) {
    if (data.imitations[i].empty()) {
      throw std::invalid_argument("train: reference '" + data.references[i].id + "' has no imitations");
    }
  }
  if (!(initial.encoders.config() == setup.encoder_config())) {
    throw std::invalid_argument("train: initial encoders do not match the configured input shape");
  }

  const FeaturePipeline pipe(setup.features);
  const Augmenter augmenter(setup.augment);
  std::vector<AudioClip> refs;
  std::vector<std::vector<AudioClip>> imits(n_refs);
  for (std::size_t i = 0; i < n_refs; ++i) {
    refs.push_back(pipe.conform(data.references[i]));
    for (const auto& clip : data.imitations[i]) imits[i].push_back(pipe.conform(clip));
  }

  TrainResult result;
  result.model = std::move(initial);
  result.model.loss = setup.loss;
  result.model.features = setup.features;
  QbvModel& model = result.model;

  std::vector<AdamState> adam(model.encoders.parameter_set_count());
  AdamState head_adam;

  const bool bce = setup.loss.objective == LossKind::bce;
  std::size_t max_imits = 0;
  for (const auto& v : imits) max_imits = std::max(max_imits, v.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Round r holds the r-th imitation (in a shuffled per-reference order) of
    // every reference that has one, so a batch never repeats a reference.
    // one_per_reference uses round 0 only; all_pairs uses every round.
    Rng order_rng(derive_seed(cfg.seed, {epoch, 1}));
    std::vector<std::vector<std::size_t>> imit_order(n_refs);
    for (std::size_t i = 0; i < n_refs; ++i) {
      imit_order[i].resize(imits[i].size());
      std::iota(imit_order[i].begin(), imit_order[i].end(), 0);
      std::shuffle(imit_order[i].begin(), imit_order[i].end(), order_rng);
    }
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> batches;
    const std::size_t rounds = cfg.sampling == EpochSampling::all_pairs ? max_imits : 1;
    for (std::size_t round = 0; round < rounds; ++round) {
      std::vector<std::pair<std::size_t, std::size_t>> items;
      for (std::size_t i = 0; i < n_refs; ++i) {
        if (round < imits[i].size()) items.emplace_back(i, imit_order[i][round]);
      }
      std::shuffle(items.begin(), items.end(), order_rng);
      for (std::size_t b = 0; b < items.size(); b += cfg.batch_size) {
        const std::size_t e = std::min(b + cfg.batch_size, items.size());
        if (e - b >= 2) batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(b),
                                             items.begin() + static_cast<std::ptrdiff_t>(e));
      }
    }
    const std::size_t steps = batches.size();

    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      Rng rng(derive_seed(cfg.seed, {epoch, 2, step}));
      std::vector<Spectrogram> ref_specs;
      std::vector<Spectrogram> imit_specs;
      for (const auto& [r, m] : batches[step]) {
        ref_specs.push_back(augmenter.random_masks(pipe.extract(augmenter.random_shift(refs[r], rng)), rng));
        imit_specs.push_back(augmenter.random_masks(pipe.extract(augmenter.random_shift(imits[r][m], rng)), rng));
      }
      augmenter.random_mixstyle(ref_specs, imit_specs, rng);
      std::vector<PairLabel> pairs;
      if (bce) pairs = sample_bce_pairs(ref_specs.size(), rng);

      std::vector<std::vector<double>> grads;
      std::vector<double> head_grad;
      double loss = 0.0;
      try {
        loss = batch_loss_and_gradients(model, ref_specs, imit_specs, pairs, grads, &head_grad);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ")");
      }
      loss_sum += loss;

      const double lr = lr_at(static_cast<double>(epoch) + static_cast<double>(step) / static_cast<double>(steps), cfg);
      for (std::size_t k = 0; k < grads.size(); ++k) {
        adam_step(model.encoders.parameter_set(k).values(), grads[k], adam[k], lr, cfg.beta1, cfg.beta2,
                  cfg.adam_eps);
      }
      if (model.head && !head_grad.empty()) {
        adam_step(model.head->values(), head_grad, head_adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(steps);
    m.lr = lr_at(static_cast<double>(epoch), cfg);
    m.val_mrr = validation != nullptr ? validation_mrr(model, *validation) : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

TrainResult train(const PairedDataset& data, const TrainingSetup& setup, const ValidationSet* validation,
                  const EpochCallback& on_epoch) {
  return train(data, setup, QbvModel::create(setup), validation, on_epoch);
}

}  // namespace qbv
