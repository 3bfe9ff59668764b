#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qbv/encoder.hpp"
#include "qbv/random.hpp"

namespace qbv {

/// S(i, j) = cos(phi_a(a_i), phi_v(v_j)). Row i is a reference, column j an
/// imitation; the diagonal holds the matched pairs.
struct SimilarityMatrix {
  std::size_t size = 0;
  std::vector<double> values;

  SimilarityMatrix() = default;
  explicit SimilarityMatrix(std::size_t n, double fill = 0.0) : size(n), values(n * n, fill) {}

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * size + j]; }
};

/// Entries are clamped to [-1, 1]. Throws DegenerateInputError on a zero-norm
/// embedding and std::invalid_argument if the counts differ.
SimilarityMatrix similarity_matrix(std::span<const Embedding> refs, std::span<const Embedding> imits);

struct EmbeddingGradients {
  std::vector<std::vector<double>> refs;
  std::vector<std::vector<double>> imits;
};

/// Pulls dL/dS back to the (unnormalized) embeddings.
EmbeddingGradients similarity_backward(std::span<const Embedding> refs, std::span<const Embedding> imits,
                                       const SimilarityMatrix& s, std::span<const double> ds);

enum class DiagonalMode {
  /// Denominator sums over i != j only (the positive is excluded).
  exclusive_diag,
  /// Standard NT-Xent: denominator over all i.
  inclusive_diag,
};

enum class LossKind { nt_xent, bce };
enum class SimilarityHead { cosine, fnn };

struct LossConfig {
  double tau = 0.07;
  DiagonalMode variant = DiagonalMode::exclusive_diag;
  LossKind objective = LossKind::nt_xent;
  SimilarityHead head = SimilarityHead::cosine;
  std::size_t fnn_hidden = 64;
  /// Logit scale for BCE on cosine similarities: logit = S / bce_tau.
  double bce_tau = 1.0;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  /// dL/dS, row-major like SimilarityMatrix::values.
  std::vector<double> grad;
};

/// L = -(1/N) sum_j log( exp(S_jj / tau) / sum_i exp(S_ij / tau) ), with the
/// denominator restricted to i != j for exclusive_diag.
LossResult nt_xent_loss(const SimilarityMatrix& s, const LossConfig& config);

struct PairLabel {
  std::size_t ref = 0;
  std::size_t imit = 0;
  int label = 0;  // 1 = match, 0 = mismatch
};

/// All n matched pairs followed by n mismatched pairs (ref i, uniform imit j != i).
std::vector<PairLabel> sample_bce_pairs(std::size_t n, Rng& rng);

/// BCE on cosine logits S(i, j) / tau, averaged over the listed pairs.
LossResult cosine_bce_loss(const SimilarityMatrix& s, std::span<const PairLabel> pairs, double tau);

/// Pairwise similarity head: concat(ref, imit) -> hidden (ReLU) -> 1 logit.
class FnnHead {
 public:
  FnnHead() = default;
  FnnHead(std::size_t embedding_dim, std::size_t hidden);
  static FnnHead init(std::size_t embedding_dim, std::size_t hidden, std::uint64_t seed);

  std::size_t embedding_dim() const { return dim_; }
  std::size_t hidden() const { return hidden_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t parameter_count() const { return values_.size(); }

  double logit(std::span<const double> ref, std::span<const double> imit) const;

  bool operator==(const FnnHead&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  // w1 [hidden x 2*dim], b1 [hidden], w2 [hidden], b2 [1]
  std::vector<double> values_;
};

struct FnnBceResult {
  double loss = 0.0;
  std::vector<double> head_grad;
  EmbeddingGradients embedding_grads;
};

/// Sigmoid-output FNN on concatenated pairs with binary cross-entropy,
/// averaged over the pairs. Embeddings enter unnormalized.
FnnBceResult fnn_bce_loss(std::span<const Embedding> refs, std::span<const Embedding> imits, const FnnHead& head,
                          std::span<const PairLabel> pairs);

/// How an epoch draws imitations: one sampled per reference, or every
/// (reference, imitation) pair once.
enum class EpochSampling { one_per_reference, all_pairs };

struct TrainConfig {
  std::size_t batch_size = 16;
  EpochSampling sampling = EpochSampling::one_per_reference;
  std::size_t epochs = 30;
  double peak_lr = 5e-4;
  std::size_t warmup_epochs = 4;
  std::size_t constant_epochs = 4;
  std::size_t decay_epochs = 14;
  std::size_t finetune_epochs = 8;
  /// Warmup starts at lr_floor * peak; decay ends there and fine-tuning holds it.
  double lr_floor = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Four-phase schedule: exponential warm-up from lr_floor * peak to peak,
/// constant peak, linear decay back to lr_floor * peak, then constant.
/// epoch is fractional; throws std::out_of_range outside [0, epochs].
double lr_at(double epoch, const TrainConfig& config);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update in place. An empty state is sized on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double eps);

}  // namespace qbv
