#include "qbv/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "qbv/errors.hpp"

namespace qbv {

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Numerically stable BCE with logits and its derivative w.r.t. the logit.
double bce_with_logit(double z, int label, double& dz) {
  const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  dz = sig - static_cast<double>(label);
  return std::max(z, 0.0) - z * static_cast<double>(label) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

SimilarityMatrix similarity_matrix(std::span<const Embedding> refs, std::span<const Embedding> imits) {
  if (refs.size() != imits.size()) throw std::invalid_argument("similarity_matrix: reference/imitation counts differ");
  const std::size_t n = refs.size();
  SimilarityMatrix s(n);
  if (n == 0) return s;
  const std::size_t dim = refs[0].values.size();
  std::vector<double> ref_norm(n);
  std::vector<double> imit_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (refs[i].values.size() != dim || imits[i].values.size() != dim) {
      throw std::invalid_argument("similarity_matrix: embedding dimensions differ");
    }
    ref_norm[i] = l2_norm(refs[i].values);
    imit_norm[i] = l2_norm(imits[i].values);
    if (ref_norm[i] == 0.0 || imit_norm[i] == 0.0) {
      throw DegenerateInputError("similarity_matrix: zero-norm embedding at index " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      const auto& a = refs[i].values;
      const auto& v = imits[j].values;
      for (std::size_t d = 0; d < dim; ++d) dot += a[d] * v[d];
      s(i, j) = std::clamp(dot / (ref_norm[i] * imit_norm[j]), -1.0, 1.0);
    }
  }
  return s;
}

EmbeddingGradients similarity_backward(std::span<const Embedding> refs, std::span<const Embedding> imits,
                                       const SimilarityMatrix& s, std::span<const double> ds) {
  const std::size_t n = refs.size();
  if (imits.size() != n || s.size != n || ds.size() != n * n) {
    throw std::invalid_argument("similarity_backward: size mismatch");
  }
  EmbeddingGradients g;
  g.refs.resize(n);
  g.imits.resize(n);
  if (n == 0) return g;
  const std::size_t dim = refs[0].values.size();
  std::vector<std::vector<double>> ref_unit(n, std::vector<double>(dim));
  std::vector<std::vector<double>> imit_unit(n, std::vector<double>(dim));
  std::vector<double> ref_norm(n);
  std::vector<double> imit_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    ref_norm[i] = l2_norm(refs[i].values);
    imit_norm[i] = l2_norm(imits[i].values);
    for (std::size_t d = 0; d < dim; ++d) {
      ref_unit[i][d] = refs[i].values[d] / ref_norm[i];
      imit_unit[i][d] = imits[i].values[d] / imit_norm[i];
    }
  }
  // dS_ij/da_i = (v^_j - S_ij a^_i) / |a_i|,  dS_ij/dv_j = (a^_i - S_ij v^_j) / |v_j|
  for (std::size_t i = 0; i < n; ++i) {
    g.refs[i].assign(dim, 0.0);
    g.imits[i].assign(dim, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = ds[i * n + j];
      if (w == 0.0) continue;
      const double sij = s(i, j);
      for (std::size_t d = 0; d < dim; ++d) {
        g.refs[i][d] += w * (imit_unit[j][d] - sij * ref_unit[i][d]) / ref_norm[i];
        g.imits[j][d] += w * (ref_unit[i][d] - sij * imit_unit[j][d]) / imit_norm[j];
      }
    }
  }
  return g;
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("loss: tau must be positive");
  if (!(bce_tau > 0.0)) throw std::invalid_argument("loss: bce_tau must be positive");
  if (objective == LossKind::nt_xent && head == SimilarityHead::fnn) {
    throw std::invalid_argument("loss: NT-Xent is defined on the cosine head only");
  }
  if (head == SimilarityHead::fnn && fnn_hidden == 0) throw std::invalid_argument("loss: fnn_hidden must be >= 1");
}

LossResult nt_xent_loss(const SimilarityMatrix& s, const LossConfig& config) {
  if (!(config.tau > 0.0)) throw std::invalid_argument("nt_xent_loss: tau must be positive");
  const std::size_t n = s.size;
  const bool exclusive = config.variant == DiagonalMode::exclusive_diag;
  if (n == 0) throw std::invalid_argument("nt_xent_loss: empty similarity matrix");
  if (exclusive && n < 2) {
    throw std::invalid_argument("nt_xent_loss: exclusive_diag needs N >= 2 (empty denominator)");
  }
  const double inv_tau = 1.0 / config.tau;
  const double inv_n = 1.0 / static_cast<double>(n);
  LossResult r;
  r.grad.assign(n * n, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (exclusive && i == j) continue;
      mx = std::max(mx, s(i, j) * inv_tau);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (exclusive && i == j) continue;
      sum += std::exp(s(i, j) * inv_tau - mx);
    }
    const double lse = mx + std::log(sum);
    total += lse - s(j, j) * inv_tau;
    for (std::size_t i = 0; i < n; ++i) {
      if (exclusive && i == j) continue;
      r.grad[i * n + j] += std::exp(s(i, j) * inv_tau - lse) * inv_tau * inv_n;
    }
    r.grad[j * n + j] -= inv_tau * inv_n;
  }
  r.loss = total * inv_n;
  return r;
}

std::vector<PairLabel> sample_bce_pairs(std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("sample_bce_pairs: need at least two pairs to draw mismatches");
  std::vector<PairLabel> pairs;
  pairs.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) pairs.push_back({i, i, 1});
  std::uniform_int_distribution<std::size_t> dist(0, n - 2);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = dist(rng);
    if (j >= i) ++j;
    pairs.push_back({i, j, 0});
  }
  return pairs;
}

LossResult cosine_bce_loss(const SimilarityMatrix& s, std::span<const PairLabel> pairs, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("cosine_bce_loss: tau must be positive");
  if (pairs.empty()) throw std::invalid_argument("cosine_bce_loss: no pairs");
  const std::size_t n = s.size;
  LossResult r;
  r.grad.assign(n * n, 0.0);
  const double inv_m = 1.0 / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    if (p.ref >= n || p.imit >= n) throw std::out_of_range("cosine_bce_loss: pair index out of range");
    double dz = 0.0;
    r.loss += bce_with_logit(s(p.ref, p.imit) / tau, p.label, dz) * inv_m;
    r.grad[p.ref * n + p.imit] += dz / tau * inv_m;
  }
  return r;
}

FnnHead::FnnHead(std::size_t embedding_dim, std::size_t hidden)
    : dim_(embedding_dim), hidden_(hidden), values_(hidden * 2 * embedding_dim + 2 * hidden + 1, 0.0) {
  if (embedding_dim == 0 || hidden == 0) throw std::invalid_argument("FnnHead: dimensions must be positive");
}

FnnHead FnnHead::init(std::size_t embedding_dim, std::size_t hidden, std::uint64_t seed) {
  FnnHead head(embedding_dim, hidden);
  Rng rng(seed);
  const std::size_t in = 2 * embedding_dim;
  std::uniform_real_distribution<double> w1(-std::sqrt(6.0 / static_cast<double>(in)),
                                            std::sqrt(6.0 / static_cast<double>(in)));
  for (std::size_t k = 0; k < hidden * in; ++k) head.values_[k] = w1(rng);
  std::uniform_real_distribution<double> w2(-std::sqrt(3.0 / static_cast<double>(hidden)),
                                            std::sqrt(3.0 / static_cast<double>(hidden)));
  const std::size_t w2_off = hidden * in + hidden;
  for (std::size_t k = 0; k < hidden; ++k) head.values_[w2_off + k] = w2(rng);
  return head;
}

double FnnHead::logit(std::span<const double> ref, std::span<const double> imit) const {
  if (ref.size() != dim_ || imit.size() != dim_) throw std::invalid_argument("FnnHead: embedding dimension mismatch");
  const std::size_t in = 2 * dim_;
  const double* w1 = values_.data();
  const double* b1 = w1 + hidden_ * in;
  const double* w2 = b1 + hidden_;
  const double b2 = w2[hidden_];
  double z = b2;
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double* row = w1 + h * in;
    double acc = b1[h];
    for (std::size_t d = 0; d < dim_; ++d) acc += row[d] * ref[d] + row[dim_ + d] * imit[d];
    if (acc > 0.0) z += w2[h] * acc;
  }
  return z;
}

FnnBceResult fnn_bce_loss(std::span<const Embedding> refs, std::span<const Embedding> imits, const FnnHead& head,
                          std::span<const PairLabel> pairs) {
  if (pairs.empty()) throw std::invalid_argument("fnn_bce_loss: no pairs");
  const std::size_t dim = head.embedding_dim();
  for (const auto& e : refs) {
    if (e.values.size() != dim) throw std::invalid_argument("fnn_bce_loss: reference embedding dimension mismatch");
  }
  for (const auto& e : imits) {
    if (e.values.size() != dim) throw std::invalid_argument("fnn_bce_loss: imitation embedding dimension mismatch");
  }
  const std::size_t hidden = head.hidden();
  const std::size_t in = 2 * dim;
  const auto vals = head.values();
  const double* w1 = vals.data();
  const double* b1 = w1 + hidden * in;
  const double* w2 = b1 + hidden;

  FnnBceResult r;
  r.head_grad.assign(head.parameter_count(), 0.0);
  double* gw1 = r.head_grad.data();
  double* gb1 = gw1 + hidden * in;
  double* gw2 = gb1 + hidden;
  double* gb2 = gw2 + hidden;
  r.embedding_grads.refs.assign(refs.size(), std::vector<double>(dim, 0.0));
  r.embedding_grads.imits.assign(imits.size(), std::vector<double>(dim, 0.0));

  const double inv_m = 1.0 / static_cast<double>(pairs.size());
  std::vector<double> pre(hidden);
  std::vector<double> x(in);
  for (const auto& p : pairs) {
    if (p.ref >= refs.size() || p.imit >= imits.size()) throw std::out_of_range("fnn_bce_loss: pair index");
    std::copy(refs[p.ref].values.begin(), refs[p.ref].values.end(), x.begin());
    std::copy(imits[p.imit].values.begin(), imits[p.imit].values.end(), x.begin() + static_cast<std::ptrdiff_t>(dim));
    double z = w2[hidden];
    for (std::size_t h = 0; h < hidden; ++h) {
      double acc = b1[h];
      const double* row = w1 + h * in;
      for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
      pre[h] = acc;
      if (acc > 0.0) z += w2[h] * acc;
    }
    double dz = 0.0;
    r.loss += bce_with_logit(z, p.label, dz) * inv_m;
    dz *= inv_m;
    *gb2 += dz;
    auto& ga = r.embedding_grads.refs[p.ref];
    auto& gv = r.embedding_grads.imits[p.imit];
    for (std::size_t h = 0; h < hidden; ++h) {
      if (pre[h] <= 0.0) continue;
      gw2[h] += dz * pre[h];
      const double dh = dz * w2[h];
      gb1[h] += dh;
      const double* row = w1 + h * in;
      double* grow = gw1 + h * in;
      for (std::size_t k = 0; k < in; ++k) grow[k] += dh * x[k];
      for (std::size_t d = 0; d < dim; ++d) {
        ga[d] += dh * row[d];
        gv[d] += dh * row[dim + d];
      }
    }
  }
  return r;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
  if (warmup_epochs + constant_epochs + decay_epochs + finetune_epochs != epochs) {
    throw std::invalid_argument("train: schedule phases (" + std::to_string(warmup_epochs) + "+" +
                                std::to_string(constant_epochs) + "+" + std::to_string(decay_epochs) + "+" +
                                std::to_string(finetune_epochs) + ") must sum to epochs (" + std::to_string(epochs) +
                                ")");
  }
  if (!(peak_lr > 0.0) || !(lr_floor > 0.0) || lr_floor > 1.0) {
    throw std::invalid_argument("train: need peak_lr > 0 and 0 < lr_floor <= 1");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || !(adam_eps > 0.0)) {
    throw std::invalid_argument("train: invalid Adam hyper-parameters");
  }
}

double lr_at(double epoch, const TrainConfig& config) {
  if (!(epoch >= 0.0) || epoch > static_cast<double>(config.epochs)) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(config.epochs) + "]");
  }
  const double peak = config.peak_lr;
  const double floor = config.lr_floor;
  const auto warm = static_cast<double>(config.warmup_epochs);
  const double hold_end = warm + static_cast<double>(config.constant_epochs);
  const double decay_end = hold_end + static_cast<double>(config.decay_epochs);
  if (epoch < warm) return peak * std::pow(floor, 1.0 - epoch / warm);
  if (epoch < hold_end) return peak;
  if (epoch < decay_end) {
    const double progress = (epoch - hold_end) / static_cast<double>(config.decay_epochs);
    return peak * (1.0 - (1.0 - floor) * progress);
  }
  return floor * peak;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state size mismatch");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace qbv
