#include "qbv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qbv/random.hpp"

namespace qbv {

using nlohmann::json;

std::size_t rank_query(RetrievalSystem& system, const std::string& imitation_id,
                       std::span<const std::string> candidate_ids, const std::string& target_id) {
  const auto it = std::find(candidate_ids.begin(), candidate_ids.end(), target_id);
  if (it == candidate_ids.end()) {
    throw std::logic_error("eval: target '" + target_id + "' missing from the candidate set of '" + imitation_id + "'");
  }
  const std::vector<double> scores = system.score(imitation_id, candidate_ids);
  if (scores.size() != candidate_ids.size()) throw std::logic_error("eval: system returned the wrong number of scores");
  return rank_of_target(scores, candidate_ids, static_cast<std::size_t>(it - candidate_ids.begin()));
}

namespace {

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

std::vector<double> cosine_scores(const std::vector<double>& q, std::span<const std::string> ids,
                                  const std::function<const std::vector<double>&(const std::string&)>& lookup) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(cosine_similarity(lookup(id), q));
  return out;
}

}  // namespace

std::vector<TrainingPair> training_pairs_excluding_fold(const Manifest& manifest, int held_out_fold) {
  std::vector<TrainingPair> pairs;
  for (const auto& im : manifest.imitations) {
    const auto& ref = manifest.reference(im.ref_id);
    if (ref.fold && *ref.fold != held_out_fold) pairs.push_back({im.ref_id, im.id});
  }
  return pairs;
}

std::vector<TrainingPair> training_pairs_for(const Manifest& manifest, std::span<const std::string> reference_ids) {
  const std::set<std::string> keep(reference_ids.begin(), reference_ids.end());
  std::vector<TrainingPair> pairs;
  for (const auto& im : manifest.imitations) {
    if (keep.count(im.ref_id) != 0) pairs.push_back({im.ref_id, im.id});
  }
  return pairs;
}

CoarseReport run_coarse(const Manifest& manifest, RetrievalSystem& system, const CoarseOptions& options) {
  if (!manifest.has_folds()) throw std::invalid_argument("coarse protocol: manifest has no folds");
  std::vector<std::string> all_ids;
  for (const auto& r : manifest.references) all_ids.push_back(r.id);

  CoarseReport report;
  std::vector<double> mrrs;
  std::map<std::size_t, std::vector<double>> recalls;
  for (int fold : manifest.folds()) {
    std::vector<std::string> fold_ids;
    for (const auto& r : manifest.references) {
      if (*r.fold == fold) fold_ids.push_back(r.id);
    }
    if (fold_ids.size() < 2) {
      throw std::invalid_argument("coarse protocol: fold " + std::to_string(fold) + " has fewer than 2 references");
    }
    const std::set<std::string> in_fold(fold_ids.begin(), fold_ids.end());

    const std::vector<TrainingPair> pairs = training_pairs_excluding_fold(manifest, fold);
    for (const auto& p : pairs) {
      if (in_fold.count(p.reference_id) != 0) {
        throw std::logic_error("coarse protocol: imitation '" + p.imitation_id + "' of evaluation fold " +
                               std::to_string(fold) + " leaked into training");
      }
    }
    system.train(pairs);

    const std::vector<std::string>& candidates = options.all_references ? all_ids : fold_ids;
    std::vector<QueryRank> ranks;
    for (const auto& im : manifest.imitations) {
      if (in_fold.count(im.ref_id) == 0) continue;
      ranks.push_back({im.id, rank_query(system, im.id, candidates, im.ref_id)});
    }
    if (ranks.empty()) continue;
    EvalReport r = make_report(Protocol::coarse, std::move(ranks), options.ks);
    mrrs.push_back(r.mrr);
    for (const auto& [k, v] : r.mr_at) recalls[k].push_back(v);
    report.folds.push_back({fold, std::move(r)});
  }
  if (report.folds.empty()) throw std::invalid_argument("coarse protocol: no fold has imitations");
  report.mrr = summarize(mrrs);
  for (const auto& [k, v] : recalls) report.mr_at[k] = summarize(v);
  return report;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_references(const Manifest& manifest,
                                                                             std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& r : manifest.references) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, {0x5B117}));
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t half = ids.size() / 2;
  std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::string> evaluation(ids.begin() + static_cast<std::ptrdiff_t>(half), ids.end());
  return {std::move(train), std::move(evaluation)};
}

EvalReport run_fine(const Manifest& manifest, RetrievalSystem& system, const FineOptions& options) {
  if (!manifest.has_hard_negatives()) throw std::invalid_argument("fine protocol: manifest has no hard negatives");
  std::set<std::string> evaluated;
  if (options.split) {
    auto [train_ids, eval_ids] = split_references(manifest, options.seed);
    system.train(training_pairs_for(manifest, train_ids));
    evaluated.insert(eval_ids.begin(), eval_ids.end());
  } else {
    for (const auto& r : manifest.references) evaluated.insert(r.id);
  }
  std::vector<QueryRank> ranks;
  for (const auto& im : manifest.imitations) {
    if (evaluated.count(im.ref_id) == 0) continue;
    const auto& ref = manifest.reference(im.ref_id);
    if (!ref.hard_negatives || ref.hard_negatives->empty()) continue;
    std::vector<std::string> candidates{ref.id};
    candidates.insert(candidates.end(), ref.hard_negatives->begin(), ref.hard_negatives->end());
    ranks.push_back({im.id, rank_query(system, im.id, candidates, ref.id)});
  }
  if (ranks.empty()) throw std::invalid_argument("fine protocol: no evaluable imitations");
  return make_report(Protocol::fine, std::move(ranks), options.ks);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json mr_at_json(const std::map<std::size_t, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

json eval_json(const EvalReport& r) {
  json ranks = json::array();
  for (const auto& q : r.per_query_ranks) ranks.push_back({{"imitation_id", q.imitation_id}, {"rank", q.rank}});
  return {{"protocol", protocol_name(r.protocol)},
          {"mrr", r.mrr},
          {"mr_at", mr_at_json(r.mr_at)},
          {"queries", r.per_query_ranks.size()},
          {"per_query_ranks", ranks}};
}

std::string fixed(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

std::string table(const std::string& protocol, const std::string& backend, const std::vector<std::string>& cells) {
  auto row = [](const std::vector<std::string>& fields) {
    std::ostringstream s;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i + 1 == fields.size()) {
        s << fields[i];
      } else {
        s << std::left << std::setw(i < 2 ? 10 : 16) << fields[i];
      }
    }
    return s.str() + "\n";
  };
  std::vector<std::string> values{protocol, backend};
  values.insert(values.end(), cells.begin(), cells.end());
  return row({"protocol", "backend", "MRR", "MR@1", "MR@2"}) + row(values);
}

}  // namespace

std::string report_json(const CoarseReport& report, const std::string& backend) {
  json folds = json::array();
  for (const auto& f : report.folds) {
    json j = eval_json(f.report);
    j["fold"] = f.fold;
    folds.push_back(j);
  }
  json mean = {{"mrr", report.mrr.mean}};
  json stdev = {{"mrr", report.mrr.std}};
  for (const auto& [k, s] : report.mr_at) {
    mean["mr@" + std::to_string(k)] = s.mean;
    stdev["mr@" + std::to_string(k)] = s.std;
  }
  return json{{"protocol", "coarse"}, {"backend", backend}, {"mean", mean}, {"std", stdev}, {"folds", folds}}.dump(2);
}

std::string report_json(const EvalReport& report, const std::string& backend) {
  json j = eval_json(report);
  j["backend"] = backend;
  return j.dump(2);
}

std::string report_table(const CoarseReport& report, const std::string& backend) {
  auto cell = [](const Summary& s) { return fixed(s.mean) + " +- " + fixed(s.std); };
  auto at = [&](std::size_t k) { return report.mr_at.count(k) ? cell(report.mr_at.at(k)) : std::string("-"); };
  return table("coarse", backend, {cell(report.mrr), at(1), at(2)});
}

std::string report_table(const EvalReport& report, const std::string& backend) {
  auto at = [&](std::size_t k) { return report.mr_at.count(k) ? fixed(report.mr_at.at(k)) : std::string("-"); };
  return table(protocol_name(report.protocol), backend, {fixed(report.mrr), at(1), at(2)});
}

// ---------------------------------------------------------------------------
// Systems

TwoDftSystem::TwoDftSystem(ClipStore& clips, BaselineConfig config, double duration_seconds)
    : clips_(clips), featurizer_(config), duration_(duration_seconds) {
  if (config.cqt.sample_rate != clips.sample_rate()) throw std::invalid_argument("2dft system: sample rate mismatch");
}

const std::vector<double>& TwoDftSystem::features(const std::string& id) {
  if (const auto it = cache_.find(id); it != cache_.end()) return it->second;
  return cache_.emplace(id, featurizer_(conform_length(clips_.get(id), duration_)).values).first->second;
}

std::vector<double> TwoDftSystem::score(const std::string& imitation_id, std::span<const std::string> candidate_ids) {
  const std::vector<double> q = features(imitation_id);
  return cosine_scores(q, candidate_ids, [this](const std::string& id) -> const std::vector<double>& { return features(id); });
}

EncoderSystem::EncoderSystem(ClipStore& clips, TrainingSetup setup, std::optional<QbvModel> initial, bool frozen)
    : clips_(clips), setup_(std::move(setup)), initial_(std::move(initial)), frozen_(frozen) {
  if (setup_.features.sample_rate() != clips.sample_rate()) throw std::invalid_argument("encoder system: sample rate mismatch");
  if (frozen_ && !initial_) throw std::invalid_argument("encoder system: frozen mode needs an initial model");
  if (frozen_) model_ = initial_;
}

void EncoderSystem::train(std::span<const TrainingPair> pairs) {
  ref_cache_.clear();
  imit_cache_.clear();
  if (frozen_) return;
  const PairedDataset data = paired_dataset(pairs, clips_);
  QbvModel start = initial_ ? *initial_ : QbvModel::create(setup_);
  model_ = qbv::train(data, setup_, std::move(start), nullptr, on_epoch_).model;
}

const Embedding& EncoderSystem::embedding(Tower tower, const std::string& id) {
  auto& cache = tower == Tower::reference ? ref_cache_ : imit_cache_;
  if (const auto it = cache.find(id); it != cache.end()) return it->second;
  return cache.emplace(id, model_->embed(tower, clips_.get(id))).first->second;
}

std::vector<double> EncoderSystem::score(const std::string& imitation_id, std::span<const std::string> candidate_ids) {
  if (!model_) throw std::logic_error("encoder system: score() before train()");
  const Embedding q = embedding(Tower::imitation, imitation_id);
  std::vector<double> out;
  out.reserve(candidate_ids.size());
  for (const auto& id : candidate_ids) out.push_back(model_->score(embedding(Tower::reference, id), q));
  return out;
}

namespace {

std::map<std::string, std::vector<double>> rows_of(const QbveBlock& b) {
  std::map<std::string, std::vector<double>> out;
  for (std::size_t i = 0; i < b.ids.size(); ++i) {
    out[b.ids[i]] = std::vector<double>(b.values.begin() + static_cast<std::ptrdiff_t>(i * b.dim),
                                        b.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * b.dim));
  }
  return out;
}

}  // namespace

ImportedSystem::ImportedSystem(const QbveBlock& references, const QbveBlock& imitations)
    : refs_(rows_of(references)), imits_(rows_of(imitations)) {
  if (references.dim != imitations.dim) throw std::invalid_argument("imported system: dimension mismatch");
}

std::vector<double> ImportedSystem::score(const std::string& imitation_id, std::span<const std::string> candidate_ids) {
  const auto q = imits_.find(imitation_id);
  if (q == imits_.end()) throw std::out_of_range("imported system: no embedding for imitation '" + imitation_id + "'");
  return cosine_scores(q->second, candidate_ids, [this](const std::string& id) -> const std::vector<double>& {
    const auto it = refs_.find(id);
    if (it == refs_.end()) throw std::out_of_range("imported system: no embedding for reference '" + id + "'");
    return it->second;
  });
}

PairedDataset paired_dataset(std::span<const TrainingPair> pairs, ClipStore& clips) {
  PairedDataset data;
  std::map<std::string, std::size_t> slot;
  for (const auto& p : pairs) {
    auto [it, fresh] = slot.emplace(p.reference_id, data.references.size());
    if (fresh) {
      data.references.push_back(clips.get(p.reference_id));
      data.imitations.emplace_back();
    }
    data.imitations[it->second].push_back(clips.get(p.imitation_id));
  }
  return data;
}

HoldoutSplit holdout_split(const Manifest& manifest, ClipStore& clips) {
  HoldoutSplit split;
  const auto groups = manifest.imitations_by_reference();
  std::map<std::string, std::size_t> slot;
  for (const auto& r : manifest.references) {
    slot.emplace(r.id, split.validation.candidates.size());
    split.validation.candidates.push_back(clips.get(r.id));
  }
  for (const auto& r : manifest.references) {
    const auto it = groups.find(r.id);
    if (it == groups.end()) continue;
    const auto& idx = it->second;
    const std::size_t train_count = idx.size() >= 2 ? idx.size() - 1 : idx.size();
    for (std::size_t k = 0; k < train_count; ++k) split.train.push_back({r.id, manifest.imitations[idx[k]].id});
    if (idx.size() >= 2) {
      split.validation.queries.push_back(clips.get(manifest.imitations[idx.back()].id));
      split.validation.targets.push_back(slot.at(r.id));
    }
  }
  return split;
}

}  // namespace qbv
