#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbv/dsp.hpp"
#include "qbv/manifest.hpp"
#include "qbv/metrics.hpp"
#include "qbv/qbve.hpp"
#include "qbv/training.hpp"

namespace qbv {

struct TrainingPair {
  std::string reference_id;
  std::string imitation_id;
};

/// A system under test. train() receives the pairs it may learn from before
/// each evaluation round; score() returns one similarity per candidate,
/// higher meaning more similar.
class RetrievalSystem {
 public:
  virtual ~RetrievalSystem() = default;
  virtual std::string name() const = 0;
  virtual void train(std::span<const TrainingPair> pairs) { (void)pairs; }
  virtual std::vector<double> score(const std::string& imitation_id, std::span<const std::string> candidate_ids) = 0;
};

/// Ranks the target among candidates with the system's scores.
std::size_t rank_query(RetrievalSystem& system, const std::string& imitation_id,
                       std::span<const std::string> candidate_ids, const std::string& target_id);

struct Summary {
  double mean = 0.0;
  /// Population standard deviation across folds.
  double std = 0.0;
};

struct FoldReport {
  int fold = 0;
  EvalReport report;
};

struct CoarseReport {
  std::vector<FoldReport> folds;
  Summary mrr;
  std::map<std::size_t, Summary> mr_at;
};

struct CoarseOptions {
  /// Rank against every reference instead of the evaluation fold's only.
  bool all_references = false;
  std::vector<std::size_t> ks{1, 2};
};

/// Pairs whose reference lies outside `held_out_fold`.
std::vector<TrainingPair> training_pairs_excluding_fold(const Manifest& manifest, int held_out_fold);
std::vector<TrainingPair> training_pairs_for(const Manifest& manifest, std::span<const std::string> reference_ids);

/// Groups pairs by reference in first-seen order.
PairedDataset paired_dataset(std::span<const TrainingPair> pairs, ClipStore& clips);

struct HoldoutSplit {
  std::vector<TrainingPair> train;
  ValidationSet validation;
};

/// The last imitation (manifest order) of every reference that has at least
/// two becomes a validation query ranked against all references; the rest
/// are training pairs.
HoldoutSplit holdout_split(const Manifest& manifest, ClipStore& clips);

/// Cross-validation over the manifest folds: train on the other folds, rank
/// the fold's references for each of its imitations. Throws
/// std::invalid_argument if folds are missing or a fold has < 2 references.
CoarseReport run_coarse(const Manifest& manifest, RetrievalSystem& system, const CoarseOptions& options = {});

struct FineOptions {
  /// Seeded 50/50 split by reference: train on one half, evaluate the other.
  /// When false nothing is trained and every imitation is evaluated.
  bool split = true;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks{1, 2};
};

/// Seeded split of the reference ids into (train, evaluation) halves.
std::pair<std::vector<std::string>, std::vector<std::string>> split_references(const Manifest& manifest,
                                                                             std::uint64_t seed);

/// Candidate set of each query is its target plus the target's hard
/// negatives. Throws std::invalid_argument if hard negatives are absent.
EvalReport run_fine(const Manifest& manifest, RetrievalSystem& system, const FineOptions& options = {});

std::string report_json(const CoarseReport& report, const std::string& backend);
std::string report_json(const EvalReport& report, const std::string& backend);
/// Aligned table with MRR, MR@1 and MR@2 columns.
std::string report_table(const CoarseReport& report, const std::string& backend);
std::string report_table(const EvalReport& report, const std::string& backend);

// ---------------------------------------------------------------------------
// Systems

/// CQT + 2DFT cosine baseline. Training is a no-op.
class TwoDftSystem : public RetrievalSystem {
 public:
  TwoDftSystem(ClipStore& clips, BaselineConfig config, double duration_seconds);
  std::string name() const override { return "twodft"; }
  std::vector<double> score(const std::string& imitation_id, std::span<const std::string> candidate_ids) override;

 private:
  const std::vector<double>& features(const std::string& id);
  ClipStore& clips_;
  BaselineFeaturizer featurizer_;
  double duration_;
  std::map<std::string, std::vector<double>> cache_;
};

/// Dual encoder trained from scratch on every train() call (or frozen when
/// `frozen` is set and an initial model is given).
class EncoderSystem : public RetrievalSystem {
 public:
  EncoderSystem(ClipStore& clips, TrainingSetup setup, std::optional<QbvModel> initial = std::nullopt,
                bool frozen = false);
  std::string name() const override { return "encoder"; }
  void train(std::span<const TrainingPair> pairs) override;
  std::vector<double> score(const std::string& imitation_id, std::span<const std::string> candidate_ids) override;
  const std::optional<QbvModel>& model() const { return model_; }
  void set_epoch_callback(EpochCallback cb) { on_epoch_ = std::move(cb); }

 private:
  const Embedding& embedding(Tower tower, const std::string& id);
  ClipStore& clips_;
  TrainingSetup setup_;
  std::optional<QbvModel> initial_;
  bool frozen_;
  std::optional<QbvModel> model_;
  EpochCallback on_epoch_;
  std::map<std::string, Embedding> ref_cache_;
  std::map<std::string, Embedding> imit_cache_;
};

/// Externally computed embeddings: one block for references, one for
/// imitations. Cosine scores; training is a no-op.
class ImportedSystem : public RetrievalSystem {
 public:
  ImportedSystem(const QbveBlock& references, const QbveBlock& imitations);
  std::string name() const override { return "imported"; }
  std::vector<double> score(const std::string& imitation_id, std::span<const std::string> candidate_ids) override;

 private:
  std::map<std::string, std::vector<double>> refs_;
  std::map<std::string, std::vector<double>> imits_;
};

}  // namespace qbv
