#include "cli.hpp"

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "qbv/audio_io.hpp"
#include "qbv/checkpoint.hpp"
#include "qbv/config.hpp"
#include "qbv/errors.hpp"
#include "qbv/eval.hpp"
#include "qbv/http_server.hpp"
#include "qbv/manifest.hpp"
#include "qbv/pretrain.hpp"
#include "qbv/qbve.hpp"
#include "qbv/retrieval.hpp"
#include "qbv/service.hpp"
#include "qbv/synthetic.hpp"
#include "qbv/training.hpp"

namespace qbv::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<int> sample_rate;
  std::optional<double> duration;
};

Settings resolve_settings(const Globals& g) {
  Settings s;
  if (!g.config.empty()) apply_config(load_config_file(g.config), s);
  if (g.sample_rate) s.training.features.logmel.sample_rate = *g.sample_rate;
  if (g.duration) s.training.features.duration_seconds = *g.duration;
  s.sync();
  return s;
}

std::shared_ptr<const QueryFeaturizer> make_featurizer(Backend backend, const Settings& settings,
                                                       const std::string& checkpoint) {
  switch (backend) {
    case Backend::encoder:
      if (checkpoint.empty()) throw std::invalid_argument("the encoder backend needs --checkpoint");
      return std::make_shared<EncoderFeaturizer>(load_checkpoint(checkpoint));
    case Backend::twodft:
      return std::make_shared<TwoDftFeaturizer>(settings.baseline, settings.training.features.duration_seconds);
    case Backend::imported:
      break;
  }
  throw std::invalid_argument("backend '" + backend_name(backend) + "' cannot featurize audio");
}

EmbeddingIndex index_from_manifest(const Manifest& manifest, const QueryFeaturizer& featurizer, Backend backend) {
  ClipStore store(manifest, featurizer.sample_rate());
  std::vector<AudioClip> refs;
  refs.reserve(manifest.references.size());
  for (const auto& r : manifest.references) refs.push_back(store.get(r.id));
  return build_index(refs, featurizer, backend);
}

QbveBlock spectrogram_block(const Spectrogram& spec) {
  QbveBlock block;
  block.dim = static_cast<std::uint32_t>(spec.bins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu", t);
    block.ids.emplace_back(name);
    for (std::size_t b = 0; b < spec.bins; ++b) block.values.push_back(static_cast<float>(spec.at(b, t)));
  }
  return block;
}

void write_block(const fs::path& path, const QbveBlock& block) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  write_qbve_block(f, block);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void append_metrics(const fs::path& path, const EpochMetrics& m) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  if (fresh) f << "epoch,loss,val_mrr,lr\n";
  f << m.epoch << ',' << std::setprecision(10) << m.loss << ',' << m.val_mrr << ',' << m.lr << '\n';
}

// Blocks SIGINT and SIGTERM on the calling thread (inherited by threads it
// starts) and stops the server when one arrives.
class SignalStopper {
 public:
  explicit SignalStopper(HttpServer& server) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    sigaddset(&set_, SIGUSR1);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
    waiter_ = std::thread([this, &server] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (sig != SIGUSR1) server.stop();
    });
  }
  ~SignalStopper() {
    pthread_kill(waiter_.native_handle(), SIGUSR1);
    waiter_.join();
    pthread_sigmask(SIG_SETMASK, &old_, nullptr);
  }

 private:
  sigset_t set_{};
  sigset_t old_{};
  std::thread waiter_;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query-by-vocal-imitation retrieval", "qbv"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--sample-rate", g.sample_rate, "Override the working sample rate")->check(CLI::PositiveNumber);
  app.add_option("--duration", g.duration, "Override the clip duration in seconds")->check(CLI::PositiveNumber);

  const std::map<std::string, Backend> audio_backends{{"encoder", Backend::encoder}, {"twodft", Backend::twodft}};
  const std::map<std::string, Backend> eval_backends{
      {"encoder", Backend::encoder}, {"twodft", Backend::twodft}, {"imported", Backend::imported}};

  // features
  auto* features = app.add_subcommand("features", "Dump log-mel, CQT or 2DFT features of a clip as QBVE");
  std::string feat_in, feat_kind = "logmel", feat_out;
  features->add_option("input", feat_in, "WAV file")->required()->check(CLI::ExistingFile);
  features->add_option("--kind", feat_kind)->check(CLI::IsMember({"logmel", "cqt", "2dft"}));
  features->add_option("--out", feat_out)->required();

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic paired corpus and manifest");
  SyntheticConfig syn;
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--classes", syn.n_classes)->check(CLI::PositiveNumber);
  gen->add_option("--imitations", syn.imitations_per_class)->check(CLI::PositiveNumber);
  gen->add_option("--seed", syn.seed);
  gen->add_option("--folds", syn.n_folds);
  gen->add_option("--hard-negatives", syn.max_hard_negatives);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Supervised class-label pretraining of the encoder");
  std::string pre_manifest, pre_out;
  PretrainConfig pcfg;
  std::optional<std::uint64_t> pre_seed;
  pre->add_option("--manifest", pre_manifest)->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Checkpoint to write")->required();
  pre->add_option("--epochs", pcfg.epochs)->check(CLI::PositiveNumber);
  pre->add_option("--batch-size", pcfg.batch_size)->check(CLI::PositiveNumber);
  pre->add_option("--lr", pcfg.lr)->check(CLI::PositiveNumber);
  pre->add_option("--seed", pre_seed);

  // train
  auto* tr = app.add_subcommand("train", "Contrastive training from a manifest");
  std::string tr_manifest, tr_out, tr_metrics, tr_init, tr_validation = "holdout";
  tr->add_option("--manifest", tr_manifest)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Checkpoint to write")->required();
  tr->add_option("--metrics", tr_metrics, "CSV to append epoch,loss,val_mrr,lr rows to");
  tr->add_option("--init", tr_init, "Start from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--validation", tr_validation, "holdout: last imitation per reference; none")
      ->check(CLI::IsMember({"holdout", "none"}));

  // index
  auto* idx = app.add_subcommand("index", "Embed manifest references into a QBVE index");
  std::string idx_manifest, idx_out, idx_checkpoint;
  Backend idx_backend = Backend::encoder;
  idx->add_option("--manifest", idx_manifest)->required()->check(CLI::ExistingFile);
  idx->add_option("--out", idx_out)->required();
  idx->add_option("--backend", idx_backend)->transform(CLI::CheckedTransformer(audio_backends));
  idx->add_option("--checkpoint", idx_checkpoint)->check(CLI::ExistingFile);

  // query
  auto* qry = app.add_subcommand("query", "Rank an index against an imitation");
  std::string q_in, q_index, q_checkpoint;
  std::size_t q_k = 10;
  std::optional<Backend> q_backend;
  bool q_json = false;
  qry->add_option("input", q_in, "Imitation WAV")->required()->check(CLI::ExistingFile);
  qry->add_option("--index", q_index)->required()->check(CLI::ExistingFile);
  qry->add_option("--k", q_k)->check(CLI::PositiveNumber);
  qry->add_option("--backend", q_backend, "Defaults to encoder with --checkpoint, else twodft")
      ->transform(CLI::CheckedTransformer(audio_backends));
  qry->add_option("--checkpoint", q_checkpoint)->check(CLI::ExistingFile);
  qry->add_flag("--json", q_json, "Print the service JSON response");

  // eval
  auto* ev = app.add_subcommand("eval", "Coarse or fine retrieval evaluation");
  std::string ev_protocol, ev_manifest, ev_json, ev_table, ev_init, ev_refs, ev_imits;
  Backend ev_backend = Backend::twodft;
  bool ev_all = false, ev_frozen = false, ev_no_split = false;
  std::uint64_t ev_seed = 0;
  ev->add_option("protocol", ev_protocol)->required()->check(CLI::IsMember({"coarse", "fine"}));
  ev->add_option("--manifest", ev_manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("--backend", ev_backend)->transform(CLI::CheckedTransformer(eval_backends));
  ev->add_option("--json", ev_json, "Write the JSON report here");
  ev->add_option("--table", ev_table, "Write the text table here");
  ev->add_option("--init", ev_init, "Encoder start checkpoint")->check(CLI::ExistingFile);
  ev->add_flag("--frozen", ev_frozen, "Evaluate --init without training");
  ev->add_option("--ref-embeddings", ev_refs, "QBVE of reference embeddings (imported)")->check(CLI::ExistingFile);
  ev->add_option("--imit-embeddings", ev_imits, "QBVE of imitation embeddings (imported)")->check(CLI::ExistingFile);
  ev->add_flag("--all-references", ev_all, "Coarse: rank against every reference");
  ev->add_flag("--no-split", ev_no_split, "Fine: evaluate every imitation without training");
  ev->add_option("--seed", ev_seed, "Fine split seed");

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP search service");
  std::string s_index, s_manifest, s_checkpoint, s_backends, s_host = "127.0.0.1", s_static;
  std::optional<Backend> s_index_backend;
  int s_port = 8080;
  srv->add_option("--index", s_index, "QBVE index served for --index-backend")->check(CLI::ExistingFile);
  srv->add_option("--manifest", s_manifest, "References for audio playback and built indices")
      ->required()
      ->check(CLI::ExistingFile);
  srv->add_option("--port", s_port)->envname("QBV_PORT")->check(CLI::Range(0, 65535));
  srv->add_option("--host", s_host);
  srv->add_option("--checkpoint", s_checkpoint, "Model for the encoder backend")->check(CLI::ExistingFile);
  srv->add_option("--backends", s_backends, "Comma-separated, e.g. encoder,twodft");
  srv->add_option("--index-backend", s_index_backend, "Backend of --index (encoder with --checkpoint, else twodft)")
      ->transform(CLI::CheckedTransformer(audio_backends));
  srv->add_option("--static", s_static, "Directory of web UI assets")->check(CLI::ExistingDirectory);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*features) {
      const Settings s = resolve_settings(g);
      const AudioClip clip = load_audio(feat_in, s.training.features.sample_rate());
      const FeaturePipeline pipe(s.training.features);
      QbveBlock block;
      if (feat_kind == "logmel") {
        block = spectrogram_block(pipe(clip));
      } else {
        const AudioClip conformed = conform_length(clip, s.training.features.duration_seconds);
        if (feat_kind == "cqt") {
          block = spectrogram_block(cqt(conformed, s.baseline.cqt));
        } else {
          const FeatureVector v = baseline_features(conformed, s.baseline);
          block.dim = static_cast<std::uint32_t>(v.values.size());
          block.ids.push_back(clip.id);
          for (double x : v.values) block.values.push_back(static_cast<float>(x));
        }
      }
      write_block(feat_out, block);
      out << feat_kind << ": " << block.ids.size() << " x " << block.dim << " -> " << feat_out << '\n';
      return 0;
    }

    if (*gen) {
      const Settings s = resolve_settings(g);
      if (g.sample_rate) syn.sample_rate = *g.sample_rate;
      if (g.duration) syn.duration_seconds = *g.duration;
      (void)s;
      const fs::path manifest = write_synthetic(gen_synthetic(syn), gen_out);
      out << manifest.string() << '\n';
      return 0;
    }

    if (*pre) {
      Settings s = resolve_settings(g);
      const Manifest manifest = read_manifest(pre_manifest);
      ClipStore store(manifest, s.training.features.sample_rate());
      pcfg.seed = pre_seed.value_or(s.training.train.seed);
      const LabeledClips data = labeled_clips(manifest, store);
      const PretrainResult r = pretrain_encoder(data, s.training, pcfg, [&](const PretrainEpoch& e) {
        out << "epoch " << e.epoch << " loss " << e.loss << " accuracy " << e.accuracy << '\n';
      });
      save_checkpoint(pre_out, model_from_pretrained(s.training, r.params));
      return 0;
    }

    if (*tr) {
      const Settings s = resolve_settings(g);
      const Manifest manifest = read_manifest(tr_manifest);
      ClipStore store(manifest, s.training.features.sample_rate());
      HoldoutSplit split;
      if (tr_validation == "holdout") {
        split = holdout_split(manifest, store);
      } else {
        for (const auto& m : manifest.imitations) split.train.push_back({m.ref_id, m.id});
      }
      const PairedDataset data = paired_dataset(split.train, store);
      const ValidationSet* val = split.validation.queries.empty() ? nullptr : &split.validation;
      QbvModel start = tr_init.empty() ? QbvModel::create(s.training) : load_checkpoint(tr_init);
      const TrainResult r = train(data, s.training, std::move(start), val, [&](const EpochMetrics& m) {
        out << "epoch " << m.epoch << " loss " << m.loss << " val_mrr " << m.val_mrr << " lr " << m.lr << '\n';
        if (!tr_metrics.empty()) append_metrics(tr_metrics, m);
      });
      save_checkpoint(tr_out, r.model);
      return 0;
    }

    if (*idx) {
      const Settings s = resolve_settings(g);
      const auto featurizer = make_featurizer(idx_backend, s, idx_checkpoint);
      const EmbeddingIndex index = index_from_manifest(read_manifest(idx_manifest), *featurizer, idx_backend);
      save_index(idx_out, index);
      out << index.size() << " references, dim " << index.dim << " -> " << idx_out << '\n';
      return 0;
    }

    if (*qry) {
      const Settings s = resolve_settings(g);
      const Backend backend = q_backend.value_or(q_checkpoint.empty() ? Backend::twodft : Backend::encoder);
      auto service = std::make_shared<SearchService>();
      service->add_backend(backend_name(backend), load_index(q_index, backend),
                           make_featurizer(backend, s, q_checkpoint));
      std::ifstream f(q_in, std::ios::binary);
      const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      const QueryResponse r = service->handle_query(bytes, q_k, backend_name(backend));
      if (q_json) {
        out << r.to_json() << '\n';
      } else {
        for (std::size_t i = 0; i < r.results.size(); ++i) {
          out << (i + 1) << '\t' << r.results[i].id << '\t' << std::fixed << std::setprecision(6)
              << r.results[i].score << '\n';
        }
      }
      return 0;
    }

    if (*ev) {
      const Settings s = resolve_settings(g);
      const Manifest manifest = read_manifest(ev_manifest);
      ClipStore store(manifest, s.training.features.sample_rate());
      std::unique_ptr<RetrievalSystem> system;
      switch (ev_backend) {
        case Backend::twodft:
          system = std::make_unique<TwoDftSystem>(store, s.baseline, s.training.features.duration_seconds);
          break;
        case Backend::encoder: {
          std::optional<QbvModel> init;
          if (!ev_init.empty()) init = load_checkpoint(ev_init);
          if (ev_frozen && !init) throw std::invalid_argument("--frozen needs --init");
          system = std::make_unique<EncoderSystem>(store, s.training, std::move(init), ev_frozen);
          break;
        }
        case Backend::imported:
          if (ev_refs.empty() || ev_imits.empty()) {
            throw std::invalid_argument("the imported backend needs --ref-embeddings and --imit-embeddings");
          }
          system = std::make_unique<ImportedSystem>(read_embeddings(ev_refs), read_embeddings(ev_imits));
          break;
      }
      const std::string name = backend_name(ev_backend);
      std::string json, table;
      if (ev_protocol == "coarse") {
        CoarseOptions o;
        o.all_references = ev_all;
        const CoarseReport r = run_coarse(manifest, *system, o);
        json = report_json(r, name);
        table = report_table(r, name);
      } else {
        FineOptions o;
        o.split = !ev_no_split;
        o.seed = ev_seed;
        const EvalReport r = run_fine(manifest, *system, o);
        json = report_json(r, name);
        table = report_table(r, name);
      }
      if (!ev_json.empty()) write_text(ev_json, json + "\n");
      if (!ev_table.empty()) write_text(ev_table, table);
      out << table;
      return 0;
    }

    if (*srv) {
      const Settings s = resolve_settings(g);
      const Manifest manifest = read_manifest(s_manifest);
      std::vector<Backend> backends;
      std::stringstream list(s_backends);
      for (std::string item; std::getline(list, item, ',');) {
        if (!item.empty()) backends.push_back(parse_backend(item));
      }
      const Backend index_backend = s_index_backend.value_or(s_checkpoint.empty() ? Backend::twodft : Backend::encoder);
      if (backends.empty()) backends.push_back(index_backend);
      auto service = std::make_shared<SearchService>();
      for (Backend b : backends) {
        const auto featurizer = make_featurizer(b, s, s_checkpoint);
        EmbeddingIndex index = (!s_index.empty() && b == index_backend) ? load_index(s_index, b)
                                                                          : index_from_manifest(manifest, *featurizer, b);
        if (!manifest.references.empty()) {
          ClipStore probe(manifest, featurizer->sample_rate());
          const std::size_t dim = featurizer->reference_features(probe.get(manifest.references.front().id)).size();
          if (dim != index.dim) {
            throw std::invalid_argument("index dim " + std::to_string(index.dim) + " does not match the " +
                                        backend_name(b) + " feature dim " + std::to_string(dim));
          }
        }
        service->add_backend(backend_name(b), std::move(index), featurizer);
      }
      std::map<std::string, fs::path> audio;
      for (const auto& r : manifest.references) audio[r.id] = manifest.resolve(r.path);
      service->set_reference_audio(std::move(audio));

      std::optional<fs::path> static_dir;
      if (!s_static.empty()) static_dir = s_static;
      HttpServer server(service, static_dir);
      const int port = server.bind(s_host, s_port);
      if (port < 0) throw std::runtime_error("cannot bind " + s_host + ":" + std::to_string(s_port));
      out << "listening on http://" << s_host << ':' << port << std::endl;
      SignalStopper stopper(server);
      server.listen_after_bind();
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace qbv::cli
