#include "qbv/metrics.hpp"

#include <array>
#include <stdexcept>

namespace qbv {

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: empty rank list");
  double acc = 0.0;
  for (std::size_t r : ranks) {
    if (r < 1) throw std::invalid_argument("mrr: ranks are 1-based");
    acc += 1.0 / static_cast<double>(r);
  }
  return acc / static_cast<double>(ranks.size());
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: empty rank list");
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t r : ranks) {
    if (r < 1) throw std::invalid_argument("recall_at_k: ranks are 1-based");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::size_t rank_of_target(std::span<const double> scores, std::span<const std::string> ids, std::size_t target) {
  if (scores.size() != ids.size()) throw std::invalid_argument("rank_of_target: scores/ids length mismatch");
  if (target >= scores.size()) throw std::out_of_range("rank_of_target: target not among candidates");
  const double st = scores[target];
  std::size_t rank = 1;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == target) continue;
    if (scores[c] > st || (scores[c] == st && ids[c] < ids[target])) ++rank;
  }
  return rank;
}

EvalReport make_report(Protocol protocol, std::vector<QueryRank> ranks, std::span<const std::size_t> ks) {
  static constexpr std::array<std::size_t, 2> kDefaultKs{1, 2};
  if (ks.empty()) ks = kDefaultKs;
  std::vector<std::size_t> r;
  r.reserve(ranks.size());
  for (const auto& q : ranks) r.push_back(q.rank);
  EvalReport report;
  report.protocol = protocol;
  report.mrr = mrr(r);
  for (std::size_t k : ks) report.mr_at[k] = recall_at_k(r, k);
  report.per_query_ranks = std::move(ranks);
  return report;
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::coarse:
      return "coarse";
    case Protocol::fine:
      return "fine";
    case Protocol::holdout:
      return "holdout";
  }
  return "unknown";
}

}  // namespace qbv
