#include "qbv/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace qbv {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

void Settings::sync() { baseline.cqt.sample_rate = training.features.logmel.sample_rate; }

std::string to_string(DiagonalMode mode) {
  return mode == DiagonalMode::exclusive_diag ? "exclusive_diag" : "inclusive_diag";
}
std::string to_string(LossKind kind) { return kind == LossKind::nt_xent ? "nt_xent" : "bce"; }
std::string to_string(SimilarityHead head) { return head == SimilarityHead::cosine ? "cosine" : "fnn"; }

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    map[key] = value;
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::string format_config_text(const ConfigMap& map) {
  std::string out;
  for (const auto& [k, v] : map) out += k + " = " + v + "\n";
  return out;
}

void apply_config(const ConfigMap& map, Settings& s) {
  auto& t = s.training;
  auto& lm = t.features.logmel;
  auto& cq = s.baseline.cqt;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters{
      {"sample_rate", [&](auto& k, auto& v) { lm.sample_rate = static_cast<int>(to_size(k, v)); }},
      {"duration", [&](auto& k, auto& v) { t.features.duration_seconds = to_double(k, v); }},
      {"window", [&](auto& k, auto& v) { lm.window = to_size(k, v); }},
      {"hop", [&](auto& k, auto& v) { lm.hop = to_size(k, v); }},
      {"n_mels", [&](auto& k, auto& v) { lm.n_mels = to_size(k, v); }},
      {"f_min", [&](auto& k, auto& v) { lm.f_min = to_double(k, v); }},
      {"f_max", [&](auto& k, auto& v) { lm.f_max = to_double(k, v); }},
      {"log_offset", [&](auto& k, auto& v) { lm.log_offset = to_double(k, v); }},
      {"cqt_f_min", [&](auto& k, auto& v) { cq.f_min = to_double(k, v); }},
      {"cqt_bins_per_octave", [&](auto& k, auto& v) { cq.bins_per_octave = to_size(k, v); }},
      {"cqt_octaves", [&](auto& k, auto& v) { cq.n_octaves = to_size(k, v); }},
      {"cqt_hop", [&](auto& k, auto& v) { cq.hop = to_size(k, v); }},
      {"log_compress", [&](auto& k, auto& v) { s.baseline.log_compress = to_bool(k, v); }},
      {"embedding_dim", [&](auto& k, auto& v) { t.encoder.embedding_dim = to_size(k, v); }},
      {"channels",
       [&](auto& k, auto& v) {
         std::istringstream in(v);
         std::string part;
         std::size_t i = 0;
         while (std::getline(in, part, ',')) {
           if (i >= 3) throw std::invalid_argument("config: 'channels' expects three comma-separated widths");
           t.encoder.channels[i++] = to_size(k, trim(part));
         }
         if (i != 3) throw std::invalid_argument("config: 'channels' expects three comma-separated widths");
       }},
      {"input_shift", [&](auto& k, auto& v) { t.encoder.input_shift = to_double(k, v); }},
      {"input_scale", [&](auto& k, auto& v) { t.encoder.input_scale = to_double(k, v); }},
      {"shared_encoder", [&](auto& k, auto& v) { t.shared_encoder = to_bool(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { t.train.batch_size = to_size(k, v); }},
      {"epochs", [&](auto& k, auto& v) { t.train.epochs = to_size(k, v); }},
      {"epoch_sampling",
       [&](auto& k, auto& v) {
         if (v == "one_per_reference") {
           t.train.sampling = EpochSampling::one_per_reference;
         } else if (v == "all_pairs") {
           t.train.sampling = EpochSampling::all_pairs;
         } else {
           throw std::invalid_argument("config: '" + k + "' must be one_per_reference or all_pairs");
         }
       }},
      {"peak_lr", [&](auto& k, auto& v) { t.train.peak_lr = to_double(k, v); }},
      {"warmup_epochs", [&](auto& k, auto& v) { t.train.warmup_epochs = to_size(k, v); }},
      {"constant_epochs", [&](auto& k, auto& v) { t.train.constant_epochs = to_size(k, v); }},
      {"decay_epochs", [&](auto& k, auto& v) { t.train.decay_epochs = to_size(k, v); }},
      {"finetune_epochs", [&](auto& k, auto& v) { t.train.finetune_epochs = to_size(k, v); }},
      {"lr_floor", [&](auto& k, auto& v) { t.train.lr_floor = to_double(k, v); }},
      {"adam_beta1", [&](auto& k, auto& v) { t.train.beta1 = to_double(k, v); }},
      {"adam_beta2", [&](auto& k, auto& v) { t.train.beta2 = to_double(k, v); }},
      {"adam_eps", [&](auto& k, auto& v) { t.train.adam_eps = to_double(k, v); }},
      {"seed",
       [&](auto& k, auto& v) {
         t.train.seed = to_size(k, v);
         t.augment.seed = t.train.seed;
       }},
      {"tau", [&](auto& k, auto& v) { t.loss.tau = to_double(k, v); }},
      {"variant",
       [&](auto& k, auto& v) {
         if (v == "exclusive_diag") {
           t.loss.variant = DiagonalMode::exclusive_diag;
         } else if (v == "inclusive_diag") {
           t.loss.variant = DiagonalMode::inclusive_diag;
         } else {
           throw std::invalid_argument("config: '" + k + "' must be exclusive_diag or inclusive_diag");
         }
       }},
      {"loss",
       [&](auto& k, auto& v) {
         if (v == "nt_xent") {
           t.loss.objective = LossKind::nt_xent;
         } else if (v == "bce") {
           t.loss.objective = LossKind::bce;
         } else {
           throw std::invalid_argument("config: '" + k + "' must be nt_xent or bce");
         }
       }},
      {"head",
       [&](auto& k, auto& v) {
         if (v == "cosine") {
           t.loss.head = SimilarityHead::cosine;
         } else if (v == "fnn") {
           t.loss.head = SimilarityHead::fnn;
         } else {
           throw std::invalid_argument("config: '" + k + "' must be cosine or fnn");
         }
       }},
      {"bce_tau", [&](auto& k, auto& v) { t.loss.bce_tau = to_double(k, v); }},
      {"fnn_hidden", [&](auto& k, auto& v) { t.loss.fnn_hidden = to_size(k, v); }},
      {"augment", [&](auto& k, auto& v) { t.augment.enabled = to_bool(k, v); }},
      {"max_shift", [&](auto& k, auto& v) { t.augment.max_shift = to_size(k, v); }},
      {"max_time_mask", [&](auto& k, auto& v) { t.augment.max_time_mask = to_size(k, v); }},
      {"max_freq_mask", [&](auto& k, auto& v) { t.augment.max_freq_mask = to_size(k, v); }},
      {"mixstyle_p", [&](auto& k, auto& v) { t.augment.mixstyle_p = to_double(k, v); }},
      {"mixstyle_alpha", [&](auto& k, auto& v) { t.augment.mixstyle_alpha = to_double(k, v); }},
      {"mask_fill", [&](auto& k, auto& v) { t.augment.mask_fill = to_double(k, v); }},
  };
  for (const auto& [key, value] : map) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(key, value);
  }
  s.sync();
}

ConfigMap to_config_map(const Settings& s) {
  const auto& t = s.training;
  const auto& lm = t.features.logmel;
  const auto& cq = s.baseline.cqt;
  ConfigMap m;
  m["sample_rate"] = std::to_string(lm.sample_rate);
  m["duration"] = fmt(t.features.duration_seconds);
  m["window"] = std::to_string(lm.window);
  m["hop"] = std::to_string(lm.hop);
  m["n_mels"] = std::to_string(lm.n_mels);
  m["f_min"] = fmt(lm.f_min);
  m["f_max"] = fmt(lm.f_max);
  m["log_offset"] = fmt(lm.log_offset);
  m["cqt_f_min"] = fmt(cq.f_min);
  m["cqt_bins_per_octave"] = std::to_string(cq.bins_per_octave);
  m["cqt_octaves"] = std::to_string(cq.n_octaves);
  m["cqt_hop"] = std::to_string(cq.hop);
  m["log_compress"] = fmt(s.baseline.log_compress);
  m["embedding_dim"] = std::to_string(t.encoder.embedding_dim);
  m["channels"] = std::to_string(t.encoder.channels[0]) + "," + std::to_string(t.encoder.channels[1]) + "," +
                  std::to_string(t.encoder.channels[2]);
  m["input_shift"] = fmt(t.encoder.input_shift);
  m["input_scale"] = fmt(t.encoder.input_scale);
  m["shared_encoder"] = fmt(t.shared_encoder);
  m["batch_size"] = std::to_string(t.train.batch_size);
  m["epochs"] = std::to_string(t.train.epochs);
  m["epoch_sampling"] = t.train.sampling == EpochSampling::all_pairs ? "all_pairs" : "one_per_reference";
  m["peak_lr"] = fmt(t.train.peak_lr);
  m["warmup_epochs"] = std::to_string(t.train.warmup_epochs);
  m["constant_epochs"] = std::to_string(t.train.constant_epochs);
  m["decay_epochs"] = std::to_string(t.train.decay_epochs);
  m["finetune_epochs"] = std::to_string(t.train.finetune_epochs);
  m["lr_floor"] = fmt(t.train.lr_floor);
  m["adam_beta1"] = fmt(t.train.beta1);
  m["adam_beta2"] = fmt(t.train.beta2);
  m["adam_eps"] = fmt(t.train.adam_eps);
  m["seed"] = std::to_string(t.train.seed);
  m["tau"] = fmt(t.loss.tau);
  m["variant"] = to_string(t.loss.variant);
  m["loss"] = to_string(t.loss.objective);
  m["head"] = to_string(t.loss.head);
  m["bce_tau"] = fmt(t.loss.bce_tau);
  m["fnn_hidden"] = std::to_string(t.loss.fnn_hidden);
  m["augment"] = fmt(t.augment.enabled);
  m["max_shift"] = std::to_string(t.augment.max_shift);
  m["max_time_mask"] = std::to_string(t.augment.max_time_mask);
  m["max_freq_mask"] = std::to_string(t.augment.max_freq_mask);
  m["mixstyle_p"] = fmt(t.augment.mixstyle_p);
  m["mixstyle_alpha"] = fmt(t.augment.mixstyle_alpha);
  m["mask_fill"] = fmt(t.augment.mask_fill);
  return m;
}

Settings load_settings(const std::filesystem::path& path) {
  Settings s;
  apply_config(load_config_file(path), s);
  return s;
}

}  // namespace qbv
