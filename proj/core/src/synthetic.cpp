#include "qbv/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "qbv/random.hpp"

namespace qbv {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Recipe {
  RecipeFamily family = RecipeFamily::tone;
  double f0 = 440.0;        // tone: start pitch; am: carrier; noise: band centre
  double glide = 1.0;       // tone: end/start pitch ratio
  std::size_t partials = 1; // tone: harmonic count
  double rate = 4.0;        // am: modulation rate; noise: pulse rate
  double depth = 0.8;       // am: modulation depth
  double bandwidth = 0.2;   // noise: relative bandwidth
  double attack = 0.05;     // seconds
};

Recipe make_recipe(std::size_t cls, std::size_t n_classes, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Recipe r;
  r.family = static_cast<RecipeFamily>(cls % 3);
  // Spread the family's members evenly in log frequency, with a small random offset.
  const std::size_t per_family = (n_classes + 2) / 3;
  const double pos = (static_cast<double>(cls / 3) + 0.25 + 0.5 * u(rng)) / static_cast<double>(per_family);
  auto log_span = [&](double lo, double hi) { return lo * std::pow(hi / lo, pos); };
  switch (r.family) {
    case RecipeFamily::tone:
      r.f0 = log_span(200.0, 2400.0);
      r.glide = std::pow(2.0, u(rng) * 1.5 - 0.75);
      r.partials = 1 + static_cast<std::size_t>(u(rng) * 3.0);
      break;
    case RecipeFamily::am:
      r.f0 = log_span(300.0, 3200.0);
      r.rate = 2.0 + 10.0 * u(rng);
      r.depth = 0.5 + 0.5 * u(rng);
      break;
    case RecipeFamily::noise_band:
      r.f0 = log_span(400.0, 5000.0);
      r.bandwidth = 0.1 + 0.3 * u(rng);
      r.rate = 1.0 + 5.0 * u(rng);
      break;
  }
  r.attack = 0.01 + 0.1 * u(rng);
  return r;
}

/// Renders a recipe with every frequency scaled by `pitch`; `rng` drives the
/// random phases, so two renderings differ in fine structure.
std::vector<double> render(const Recipe& r, double pitch, int sr, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<double> out(n, 0.0);
  const double dur = static_cast<double>(n) / sr;
  const double nyq = 0.45 * sr;
  auto env = [&](double t) {
    const double a = std::min(1.0, t / r.attack);
    const double d = std::min(1.0, (dur - t) / 0.05);
    return std::max(0.0, a) * std::max(0.0, d);
  };
  switch (r.family) {
    case RecipeFamily::tone: {
      std::vector<double> ph(r.partials);
      for (auto& p : ph) p = phase(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double f = r.f0 * pitch * std::pow(r.glide, t / dur);
        for (std::size_t h = 0; h < r.partials; ++h) {
          const double fh = f * static_cast<double>(h + 1);
          if (fh >= nyq) break;
          ph[h] += kTwoPi * fh / sr;
          out[i] += std::sin(ph[h]) / static_cast<double>(h + 1);
        }
        out[i] *= env(t);
      }
      break;
    }
    case RecipeFamily::am: {
      const double p0 = phase(rng);
      const double pm = phase(rng);
      const double fc = std::min(r.f0 * pitch, nyq);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double m = 1.0 - r.depth * 0.5 * (1.0 + std::sin(kTwoPi * r.rate * t + pm));
        out[i] = env(t) * m * std::sin(kTwoPi * fc * t + p0);
      }
      break;
    }
    case RecipeFamily::noise_band: {
      constexpr std::size_t kComponents = 48;
      const double centre = r.f0 * pitch;
      const double lo = centre * (1.0 - r.bandwidth / 2.0);
      const double hi = std::min(centre * (1.0 + r.bandwidth / 2.0), nyq);
      std::uniform_real_distribution<double> freq(lo, hi);
      std::vector<double> fs(kComponents);
      std::vector<double> ps(kComponents);
      for (std::size_t c = 0; c < kComponents; ++c) {
        fs[c] = freq(rng);
        ps[c] = phase(rng);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        double v = 0.0;
        for (std::size_t c = 0; c < kComponents; ++c) v += std::sin(kTwoPi * fs[c] * t + ps[c]);
        const double pulse = std::pow(0.5 * (1.0 + std::cos(kTwoPi * r.rate * t)), 2.0);
        out[i] = env(t) * pulse * v / std::sqrt(static_cast<double>(kComponents));
      }
      break;
    }
  }
  return out;
}

AudioClip to_clip(std::string id, int sr, const std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  AudioClip clip;
  clip.id = std::move(id);
  clip.sample_rate = sr;
  clip.samples.resize(x.size());
  const double g = peak > 0.0 ? 0.7 / peak : 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) clip.samples[i] = static_cast<float>(x[i] * g);
  return clip;
}

std::string pad(std::size_t v, std::size_t width) {
  std::string s = std::to_string(v);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

const char* family_name(RecipeFamily f) {
  switch (f) {
    case RecipeFamily::tone:
      return "tone";
    case RecipeFamily::am:
      return "am";
    case RecipeFamily::noise_band:
      return "noise";
  }
  return "?";
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
  if (imitations_per_class < 1) throw std::invalid_argument("synthetic: need at least 1 imitation per class");
  if (n_folds < 1) throw std::invalid_argument("synthetic: need at least 1 fold");
  if (sample_rate < 8000) throw std::invalid_argument("synthetic: sample rate must be at least 8000 Hz");
  if (!(duration_seconds > 0.0)) throw std::invalid_argument("synthetic: duration must be positive");
  if (!(pitch_jitter >= 0.0 && pitch_jitter < 0.5)) throw std::invalid_argument("synthetic: pitch jitter out of range");
  if (!(max_delay_seconds >= 0.0 && max_delay_seconds < duration_seconds)) {
    throw std::invalid_argument("synthetic: delay must be shorter than the clip");
  }
  if (!(snr_min_db <= snr_max_db)) throw std::invalid_argument("synthetic: snr_min_db > snr_max_db");
}

SyntheticDataset gen_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const int sr = cfg.sample_rate;
  const std::size_t n = samples_for(cfg.duration_seconds, sr);
  const std::size_t w = std::to_string(cfg.n_classes).size();

  SyntheticDataset data;
  std::vector<Recipe> recipes;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    Rng rng(derive_seed(cfg.seed, {c, 0}));
    recipes.push_back(make_recipe(c, cfg.n_classes, rng));
  }

  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    const Recipe& r = recipes[c];
    const std::string ref_id = "ref_" + pad(c, w);
    Rng rng(derive_seed(cfg.seed, {c, 1}));
    data.references.push_back(to_clip(ref_id, sr, render(r, 1.0, sr, n, rng)));
    data.families.push_back(r.family);

    ReferenceRecord rec;
    rec.id = ref_id;
    rec.path = "refs/" + ref_id + ".wav";
    rec.label = std::string(family_name(r.family)) + "_" + pad(c, w);
    rec.fold = static_cast<int>(c % cfg.n_folds);
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t o = 0; o < cfg.n_classes; ++o) {
      if (o != c && recipes[o].family == r.family) near.push_back({std::abs(std::log(recipes[o].f0 / r.f0)), o});
    }
    std::sort(near.begin(), near.end());
    std::vector<std::string> negatives;
    for (std::size_t i = 0; i < near.size() && i < cfg.max_hard_negatives; ++i) {
      negatives.push_back("ref_" + pad(near[i].second, w));
    }
    if (!negatives.empty()) rec.hard_negatives = std::move(negatives);
    data.manifest.references.push_back(std::move(rec));

    for (std::size_t k = 0; k < cfg.imitations_per_class; ++k) {
      Rng irng(derive_seed(cfg.seed, {c, 2, k}));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double pitch = 1.0 + cfg.pitch_jitter * (2.0 * u(irng) - 1.0);
      const auto delay = static_cast<std::size_t>(std::llround(u(irng) * cfg.max_delay_seconds * sr));
      const double snr_db = cfg.snr_min_db + (cfg.snr_max_db - cfg.snr_min_db) * u(irng);
      const std::vector<double> clean = render(r, pitch, sr, n, irng);
      std::vector<double> x(n, 0.0);
      for (std::size_t i = delay; i < n; ++i) x[i] = clean[i - delay];
      double power = 0.0;
      for (double v : x) power += v * v;
      power /= static_cast<double>(n);
      const double noise_sd = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
      std::normal_distribution<double> noise(0.0, noise_sd);
      for (double& v : x) v += noise(irng);

      const std::string im_id = "imit_" + pad(c, w) + "_" + std::to_string(k);
      data.imitations.push_back(to_clip(im_id, sr, x));
      data.manifest.imitations.push_back({im_id, "imits/" + im_id + ".wav", ref_id});
    }
  }
  data.manifest.validate();
  return data;
}

std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "refs");
  std::filesystem::create_directories(dir / "imits");
  for (std::size_t i = 0; i < data.references.size(); ++i) {
    write_wav(dir / data.manifest.references[i].path, data.references[i], WavEncoding::float32);
  }
  for (std::size_t i = 0; i < data.imitations.size(); ++i) {
    write_wav(dir / data.manifest.imitations[i].path, data.imitations[i], WavEncoding::float32);
  }
  const auto path = dir / "manifest.jsonl";
  write_manifest(path, data.manifest);
  return path;
}

}  // namespace qbv
