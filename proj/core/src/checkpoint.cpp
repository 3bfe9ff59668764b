#include "qbv/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "qbv/errors.hpp"
#include "qbv/qbve.hpp"

namespace qbv {

namespace {

const char* prefix(const DualEncoder& enc, std::size_t set) {
  if (enc.shared()) return "shared.";
  return set == 0 ? "reference." : "imitation.";
}

void write_array(std::ostream& out, const std::string& name, std::span<const double> values) {
  QbveBlock b;
  b.dim = static_cast<std::uint32_t>(values.size());
  b.ids = {name};
  b.values.assign(values.begin(), values.end());
  write_qbve_block(out, b);
}

}  // namespace

Settings model_settings(const QbvModel& model) {
  Settings s;
  s.training.features = model.features;
  s.training.encoder = model.encoders.config();
  s.training.loss = model.loss;
  s.training.shared_encoder = model.encoders.shared();
  if (model.head) s.training.loss.fnn_hidden = model.head->hidden();
  s.sync();
  return s;
}

void write_checkpoint(std::ostream& out, const QbvModel& model) {
  QbveBlock header;
  header.ids.push_back(kParamsKindTag);
  for (const auto& [k, v] : to_config_map(model_settings(model))) header.ids.push_back("config:" + k + "=" + v);
  write_qbve_block(out, header);
  const DualEncoder& enc = model.encoders;
  for (std::size_t s = 0; s < enc.parameter_set_count(); ++s) {
    const EncoderParams& p = enc.parameter_set(s);
    for (const auto& a : p.layout()) write_array(out, prefix(enc, s) + a.name, p.array(a.name));
  }
  if (model.head) write_array(out, "head.fnn", model.head->values());
}

QbvModel read_checkpoint(std::istream& in) {
  const QbveBlock header = read_qbve_block(in);
  if (header.dim != 0 || header.ids.empty() || header.ids.front() != kParamsKindTag) {
    throw FormatError("checkpoint: missing '" + std::string(kParamsKindTag) + "' header block");
  }
  ConfigMap cfg;
  for (std::size_t i = 1; i < header.ids.size(); ++i) {
    const std::string& line = header.ids[i];
    const auto eq = line.find('=');
    if (line.rfind("config:", 0) != 0 || eq == std::string::npos) {
      throw FormatError("checkpoint: malformed header entry '" + line + "'");
    }
    cfg[line.substr(7, eq - 7)] = line.substr(eq + 1);
  }
  Settings settings;
  try {
    apply_config(cfg, settings);
    settings.training.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: bad configuration: ") + e.what());
  }

  std::map<std::string, std::vector<float>> arrays;
  while (in.peek() != std::char_traits<char>::eof()) {
    QbveBlock b = read_qbve_block(in);
    if (b.ids.size() != 1) throw FormatError("checkpoint: parameter blocks must hold exactly one entry");
    if (!arrays.emplace(b.ids.front(), std::move(b.values)).second) {
      throw FormatError("checkpoint: duplicate array '" + b.ids.front() + "'");
    }
  }

  const TrainingSetup& setup = settings.training;
  const EncoderConfig ecfg = setup.encoder_config();
  auto take = [&](const std::string& name, std::span<double> dst) {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("checkpoint: missing array '" + name + "'");
    if (it->second.size() != dst.size()) throw FormatError("checkpoint: array '" + name + "' has the wrong size");
    std::copy(it->second.begin(), it->second.end(), dst.begin());
    arrays.erase(it);
  };
  auto load_tower = [&](const std::string& pre) {
    EncoderParams p(ecfg);
    for (const auto& a : p.layout()) take(pre + a.name, p.array(a.name));
    return p;
  };

  QbvModel model;
  model.features = setup.features;
  model.loss = setup.loss;
  model.encoders = setup.shared_encoder
                       ? DualEncoder::from_shared(load_tower("shared."))
                       : DualEncoder::from_towers(load_tower("reference."), load_tower("imitation."));
  if (setup.loss.head == SimilarityHead::fnn) {
    FnnHead head(ecfg.embedding_dim, setup.loss.fnn_hidden);
    take("head.fnn", head.values());
    model.head = std::move(head);
  }
  if (!arrays.empty()) throw FormatError("checkpoint: unexpected array '" + arrays.begin()->first + "'");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const QbvModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, model);
}

QbvModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace qbv
