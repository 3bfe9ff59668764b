// Acceptance checks. Each check prints one PASS/FAIL line with the measured
// value, the pinned threshold and the runtime against its budget.
//
//   qbv_acceptance            run every check
//   qbv_acceptance <name>     run one check; exit status 0 iff it passes

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qbv/contrastive.hpp"
#include "qbv/dsp.hpp"
#include "qbv/metrics.hpp"
#include "qbv/pretrain.hpp"
#include "qbv/qbve.hpp"
#include "qbv/synthetic.hpp"
#include "qbv/training.hpp"

using namespace qbv;
using namespace qbv::test;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok " : "BAD ") + what);
  }
};

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Desk-scale benchmark: 32 classes x 4 imitations at 16 kHz, 1 s clips.
// Imitations 0..2 train, imitation 3 is ranked against all 32 references.
TrainingSetup desk_setup(std::uint64_t seed) {
  TrainingSetup s;
  s.features.duration_seconds = 1.0;
  s.features.logmel = {16000, 512, 256, 32, 0.0, 8000.0, 1e-5};
  s.augment.max_shift = 2000;
  s.augment.max_time_mask = 24;
  s.augment.max_freq_mask = 1;
  s.augment.seed = seed;
  s.train.peak_lr = 1e-3;
  s.train.batch_size = 16;
  s.train.sampling = EpochSampling::all_pairs;
  s.train.seed = seed;
  s.loss.tau = 0.07;
  return s;
}

struct DeskData {
  PairedDataset train;
  ValidationSet validation;
};

DeskData desk_data(std::uint64_t seed) {
  SyntheticConfig sc;
  sc.seed = seed;
  const SyntheticDataset d = gen_synthetic(sc);
  const std::size_t per = sc.imitations_per_class;
  DeskData out;
  for (std::size_t c = 0; c < sc.n_classes; ++c) {
    out.train.references.push_back(d.references[c]);
    out.train.imitations.emplace_back(d.imitations.begin() + static_cast<std::ptrdiff_t>(c * per),
                                      d.imitations.begin() + static_cast<std::ptrdiff_t>(c * per + per - 1));
    out.validation.candidates.push_back(d.references[c]);
    out.validation.queries.push_back(d.imitations[c * per + per - 1]);
    out.validation.targets.push_back(c);
  }
  return out;
}

// Backbone stand-in: class-label pretraining on a disjoint synthetic corpus.
PretrainResult desk_pretrain(const TrainingSetup& setup, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.seed = seed + 1000;
  const SyntheticDataset d = gen_synthetic(sc);
  LabeledClips lc;
  lc.n_classes = sc.n_classes;
  for (std::size_t c = 0; c < sc.n_classes; ++c) {
    lc.clips.push_back(d.references[c]);
    lc.labels.push_back(c);
    for (std::size_t k = 0; k < sc.imitations_per_class; ++k) {
      lc.clips.push_back(d.imitations[c * sc.imitations_per_class + k]);
      lc.labels.push_back(c);
    }
  }
  PretrainConfig pc;
  pc.seed = seed;
  return pretrain_encoder(lc, setup, pc);
}

// ---------------------------------------------------------------------------

Outcome nt_xent() {
  Outcome o;
  SimilarityMatrix eye(2);
  eye(0, 0) = eye(1, 1) = 1.0;
  LossConfig c;
  c.tau = 1.0;
  c.variant = DiagonalMode::exclusive_diag;
  const double excl = nt_xent_loss(eye, c).loss;
  c.variant = DiagonalMode::inclusive_diag;
  const double incl = nt_xent_loss(eye, c).loss;
  o.check(std::abs(excl + 1.0) <= 1e-9, fmt("exclusive closed form %.12f vs -1 (tol 1e-9)", excl));
  const double target = std::log(1.0 + std::exp(-1.0));
  o.check(std::abs(incl - target) <= 1e-9, fmt("inclusive closed form %.12f vs %.12f (tol 1e-9)", incl, target));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (DiagonalMode mode : {DiagonalMode::exclusive_diag, DiagonalMode::inclusive_diag}) {
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      SimilarityMatrix s(8);
      for (auto& v : s.values) v = u(rng);
      LossConfig lc;
      lc.tau = 0.07;
      lc.variant = mode;
      const LossResult r = nt_xent_loss(s, lc);
      const bool ex = mode == DiagonalMode::exclusive_diag;
      const double h = 1e-5;
      for (std::size_t k = 0; k < 64; ++k) {
        const long double fp = nt_xent_oracle<long double>(s, 0.07, ex, h, k);
        const long double fm = nt_xent_oracle<long double>(s, 0.07, ex, -h, k);
        worst = std::max(worst, rel_err(r.grad[k], static_cast<double>((fp - fm) / (2.0L * h)), 1e-8));
      }
    }
    o.check(worst <= 1e-4, fmt(mode == DiagonalMode::exclusive_diag
                                   ? "exclusive 8x8 tau=0.07 max rel err %.3g over 10 matrices (tol 1e-4)"
                                   : "inclusive 8x8 tau=0.07 max rel err %.3g over 10 matrices (tol 1e-4)",
                               worst));
  }
  return o;
}

Outcome pipeline_gradient() {
  Outcome o;
  const TrainingSetup setup = desk_setup(3);
  const FeaturePipeline features(setup.features);
  SyntheticConfig sc;
  sc.n_classes = 4;
  sc.imitations_per_class = 1;
  sc.seed = 3;
  const SyntheticDataset d = gen_synthetic(sc);
  std::vector<Spectrogram> refs, imits;
  for (std::size_t i = 0; i < 4; ++i) {
    refs.push_back(features(d.references[i]));
    imits.push_back(features(d.imitations[i]));
  }
  struct Variant {
    const char* name;
    LossKind kind;
    SimilarityHead head;
    bool shared;
  };
  for (const Variant& v : {Variant{"nt-xent dual", LossKind::nt_xent, SimilarityHead::cosine, false},
                           Variant{"nt-xent shared", LossKind::nt_xent, SimilarityHead::cosine, true},
                           Variant{"bce cosine", LossKind::bce, SimilarityHead::cosine, false},
                           Variant{"bce fnn", LossKind::bce, SimilarityHead::fnn, false}}) {
    TrainingSetup s = setup;
    s.loss.objective = v.kind;
    s.loss.head = v.head;
    s.shared_encoder = v.shared;
    QbvModel m = QbvModel::create(s);
    Rng rng(11);
    const auto pairs = sample_bce_pairs(4, rng);
    std::vector<std::vector<double>> grads;
    std::vector<double> head_grad;
    const double loss = batch_loss_and_gradients(m, refs, imits, pairs, grads, &head_grad);
    const double oracle_loss = forward_oracle(m, refs, imits, pairs);
    double worst = rel_err(loss, oracle_loss, 1e-12) > 1e-9 ? 1.0 : 0.0;
    const double h = 1e-5;
    std::mt19937_64 pick(13);
    const std::size_t per_set = v.shared ? 50 : 25;
    std::size_t checked = 0;
    for (std::size_t set = 0; set < m.encoders.parameter_set_count(); ++set) {
      auto values = m.encoders.parameter_set(set).values();
      for (std::size_t t = 0; t < per_set; ++t) {
        const std::size_t k = pick() % values.size();
        const double orig = values[k];
        values[k] = orig + h;
        const double fp = forward_oracle(m, refs, imits, pairs);
        values[k] = orig - h;
        const double fm = forward_oracle(m, refs, imits, pairs);
        values[k] = orig;
        worst = std::max(worst, rel_err(grads[set][k], (fp - fm) / (2 * h), 1e-6));
        ++checked;
      }
    }
    o.check(worst <= 1e-3, std::string(v.name) + fmt(": %.0f encoder params, max rel err %.3g (tol 1e-3)",
                                                     static_cast<double>(checked), worst));
  }
  return o;
}

Outcome twodft_shift() {
  Outcome o;
  // Default baseline settings: 1 s at 32 kHz is exactly 50 hops, so a
  // circular shift by whole hops is a circular shift of the CQT frames.
  const BaselineConfig b;
  SyntheticConfig sc;
  sc.n_classes = 20;
  sc.imitations_per_class = 1;
  sc.seed = 5;
  sc.sample_rate = b.cqt.sample_rate;
  const SyntheticDataset d = gen_synthetic(sc);
  std::mt19937_64 rng(17);
  double lowest = 1.0;
  for (const AudioClip& clip : d.references) {
    const std::size_t n = clip.samples.size();
    const std::size_t frames = n / b.cqt.hop;
    const std::size_t shift = (1 + rng() % (frames - 1)) * b.cqt.hop;
    AudioClip shifted = clip;
    std::rotate_copy(clip.samples.begin(), clip.samples.end() - static_cast<std::ptrdiff_t>(shift),
                     clip.samples.end(), shifted.samples.begin());
    lowest = std::min(lowest, baseline_similarity(clip, shifted, b));
  }
  o.check(lowest >= 1.0 - 1e-6,
          fmt("min similarity over 20 clips, random whole-hop shifts %.12f (>= 1 - 1e-6)", lowest));

  double worst = 0.0;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Spectrogram s(4, 4);
    for (auto& v : s.values) v = g(rng);
    const FeatureVector f = two_dft(s);
    for (std::size_t u = 0; u < 4; ++u) {
      for (std::size_t v = 0; v < 4; ++v) {
        std::complex<double> acc = 0.0;
        for (std::size_t m = 0; m < 4; ++m)
          for (std::size_t k = 0; k < 4; ++k)
            acc += s.at(m, k) * std::polar(1.0, -2.0 * kPi * (double(u * m) / 4.0 + double(v * k) / 4.0));
        worst = std::max(worst, std::abs(f.values[u * 4 + v] - std::abs(acc)));
      }
    }
  }
  o.check(worst <= 1e-9, fmt("4x4 brute-force max abs diff %.3g over 10 inputs (tol 1e-9)", worst));
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  const std::vector<std::size_t> ranks{1, 2, 4};
  const double m = mrr(ranks);
  o.check(std::abs(m - 7.0 / 12.0) <= 1e-12, fmt("mrr([1,2,4]) = %.15f vs 7/12 (tol 1e-12)", m));

  std::mt19937_64 rng(19);
  std::size_t agree = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<double> scores(n);
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 3);
      ids[i] = "c" + std::to_string(rng() % 100) + "_" + std::to_string(i);
    }
    const std::size_t target = rng() % n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : ids[a] < ids[b];
    });
    const auto expected = static_cast<std::size_t>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
    agree += rank_of_target(scores, ids, target) == expected;
  }
  o.check(agree == 1000, fmt("exhaustive-sort agreement %.0f / 1000", static_cast<double>(agree)));

  for (std::size_t n : {std::size_t{10}, std::size_t{52}}) {
    std::vector<std::size_t> sim;
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = "r" + std::to_string(i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int q = 0; q < 4000; ++q) {
      std::vector<double> scores(n);
      for (auto& s : scores) s = u(rng);
      sim.push_back(rank_of_target(scores, ids, rng() % n));
    }
    const double got = mrr(sim);
    const double expected = harmonic_over_n(n);
    o.check(std::abs(got - expected) <= 0.01,
            fmt(n == 10 ? "random MRR N=10 over 4000 queries %.5f vs H_N/N %.5f (tol 0.01)"
                        : "random MRR N=52 over 4000 queries %.5f vs H_N/N %.5f (tol 0.01)",
                got, expected));
  }
  return o;
}

Outcome end_to_end() {
  Outcome o;
  const TrainingSetup setup = desk_setup(0);
  const DeskData data = desk_data(0);
  o.check(setup.train.epochs <= 30, fmt("epochs %.0f (<= 30)", static_cast<double>(setup.train.epochs)));
  const TrainResult a = train(data.train, setup, &data.validation);
  const TrainResult b = train(data.train, setup, &data.validation);
  const double final_mrr = a.history.back().val_mrr;
  double best = 0.0;
  for (const auto& e : a.history) best = std::max(best, e.val_mrr);
  o.check(final_mrr >= 0.9, fmt("held-out MRR after final epoch %.4f (best %.4f), threshold 0.9", final_mrr, best));
  bool identical = a.history.size() == b.history.size();
  for (std::size_t i = 0; identical && i < a.history.size(); ++i) {
    identical = std::bit_cast<std::uint64_t>(a.history[i].loss) == std::bit_cast<std::uint64_t>(b.history[i].loss) &&
                std::bit_cast<std::uint64_t>(a.history[i].val_mrr) ==
                    std::bit_cast<std::uint64_t>(b.history[i].val_mrr);
  }
  o.check(identical, "second same-seed run reproduces the loss curve bit for bit");
  return o;
}

Outcome ablation() {
  Outcome o;
  const char* names[] = {"nt-xent+cos dual", "nt-xent+cos shared", "bce+cos", "bce+fnn"};
  std::vector<std::vector<double>> mrr_of(4);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TrainingSetup base = desk_setup(seed);
    const PretrainResult pre = desk_pretrain(base, seed);
    const DeskData data = desk_data(seed);
    for (int v = 0; v < 4; ++v) {
      TrainingSetup s = base;
      s.shared_encoder = v == 1;
      if (v >= 2) s.loss.objective = LossKind::bce;
      if (v == 3) s.loss.head = SimilarityHead::fnn;
      const TrainResult r = train(data.train, s, model_from_pretrained(s, pre.params), &data.validation);
      mrr_of[v].push_back(validation_mrr(r.model, data.validation));
    }
    std::ostringstream line;
    line << "seed " << seed << ":";
    for (int v = 0; v < 4; ++v) line << ' ' << names[v] << '=' << fmt("%.3f", mrr_of[v].back());
    std::printf("  %s\n", line.str().c_str());
    std::fflush(stdout);
  }
  auto mean = [](const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); };
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string tag = "seed " + std::to_string(s) + ": ";
    o.check(mrr_of[0][s] > mrr_of[2][s] && mrr_of[2][s] > mrr_of[3][s],
            tag + fmt("nt-xent+cos %.3f > bce+cos %.3f", mrr_of[0][s], mrr_of[2][s]) +
                fmt(" > bce+fnn %.3f", mrr_of[3][s]));
    o.check(mrr_of[0][s] >= mrr_of[1][s], tag + fmt("dual %.3f >= shared %.3f", mrr_of[0][s], mrr_of[1][s]));
  }
  std::printf("  mean MRR: dual %.3f shared %.3f bce+cos %.3f bce+fnn %.3f\n", mean(mrr_of[0]), mean(mrr_of[1]),
              mean(mrr_of[2]), mean(mrr_of[3]));
  return o;
}

Outcome qbve_format() {
  Outcome o;
  const std::vector<std::uint8_t> expected{0x51, 0x42, 0x56, 0x45, 0x01, 0x00, 0x00, 0x00, 0x02,
                                           0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x00,
                                           0x61, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x00};
  o.check(encode_qbve(QbveBlock{2, {"a"}, {1.0f, 0.0f}}) == expected, "single-entry byte layout matches");
  const QbveBlock back = decode_qbve(expected);
  o.check(back.dim == 2 && back.ids == std::vector<std::string>{"a"} &&
              back.values == std::vector<float>{1.0f, 0.0f},
          "single-entry bytes decode to dim 2, id \"a\", [1, 0]");

  std::mt19937_64 rng(23);
  std::size_t good = 0;
  for (int trial = 0; trial < 500; ++trial) {
    QbveBlock b;
    b.dim = static_cast<std::uint32_t>(rng() % 17);
    const std::size_t count = rng() % 16;
    for (std::size_t e = 0; e < count; ++e) {
      std::string id;
      for (std::size_t k = rng() % 24; k > 0; --k) id.push_back(static_cast<char>(rng() & 0xFF));
      b.ids.push_back(id + "/" + std::to_string(e));
      for (std::uint32_t k = 0; k < b.dim; ++k) {
        float v;
        do v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
        while (!std::isfinite(v));
        b.values.push_back(v);
      }
    }
    const auto bytes = encode_qbve(b);
    const QbveBlock r = decode_qbve(bytes);
    bool same = r.dim == b.dim && r.ids == b.ids && r.values.size() == b.values.size();
    for (std::size_t i = 0; same && i < b.values.size(); ++i) {
      same = std::bit_cast<std::uint32_t>(r.values[i]) == std::bit_cast<std::uint32_t>(b.values[i]);
    }
    good += same && encode_qbve(r) == bytes;
  }
  o.check(good == 500, fmt("bitwise round trips %.0f / 500", static_cast<double>(good)));
  return o;
}

Outcome lr_schedule() {
  Outcome o;
  const TrainConfig c;
  const double peak = c.peak_lr;
  const std::pair<double, double> points[] = {{0, 0.01}, {4, 1.0}, {6, 1.0}, {15, 0.505}, {22, 0.01}, {30, 0.01}};
  for (const auto& [epoch, factor] : points) {
    const double got = lr_at(epoch, c);
    o.check(std::abs(got - factor * peak) <= 1e-12,
            fmt("lr(%.0f) = %.15g", epoch, got) + fmt(" vs %.15g (tol 1e-12)", factor * peak));
  }
  return o;
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"nt_xent", 1.0, nt_xent},
      {"pipeline_gradient", 30.0, pipeline_gradient},
      {"twodft_shift_invariance", 10.0, twodft_shift},
      {"metric_oracles", 10.0, metric_oracles},
      {"end_to_end", 300.0, end_to_end},
      {"ablation_ordering", 1200.0, ablation},
      {"qbve_format", 10.0, qbve_format},
      {"lr_schedule", 1.0, lr_schedule},
  };
  return all;
}

bool run_one(const Criterion& c) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o.check(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < c.budget_seconds;
  const bool pass = o.pass && in_time;
  for (const auto& n : o.notes) std::printf("  %s\n", n.c_str());
  std::printf("%s %s (%.2f s, budget %.0f s)\n", pass ? "PASS" : "FAIL", c.name, secs, c.budget_seconds);
  std::fflush(stdout);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 2) {
    std::fprintf(stderr, "usage: %s [criterion]\n", argv[0]);
    return 2;
  }
  bool ok = true;
  bool found = false;
  for (const auto& c : criteria()) {
    if (argc == 2 && argv[1] != std::string(c.name)) continue;
    found = true;
    ok = run_one(c) && ok;
  }
  if (!found) {
    std::fprintf(stderr, "unknown criterion '%s'; known:", argv[1]);
    for (const auto& c : criteria()) std::fprintf(stderr, " %s", c.name);
    std::fprintf(stderr, "\n");
    return 2;
  }
  return ok ? 0 : 1;
}
