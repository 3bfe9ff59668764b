#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace qbv {

/// Mean reciprocal rank: (1/|Q|) sum 1/rank_i. Ranks are 1-based.
double mrr(std::span<const std::size_t> ranks);

/// Fraction of ranks <= k.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);

/// 1-based rank of candidate `target` when candidates are sorted by score
/// descending, ties broken by ascending id.
std::size_t rank_of_target(std::span<const double> scores, std::span<const std::string> ids, std::size_t target);

enum class Protocol { coarse, fine, holdout };

struct QueryRank {
  std::string imitation_id;
  std::size_t rank = 0;
};

struct EvalReport {
  Protocol protocol = Protocol::coarse;
  double mrr = 0.0;
  std::map<std::size_t, double> mr_at;
  std::vector<QueryRank> per_query_ranks;
};

/// Builds a report (MRR and MR@k for each k in ks) from per-query ranks.
EvalReport make_report(Protocol protocol, std::vector<QueryRank> ranks, std::span<const std::size_t> ks = {});

std::string protocol_name(Protocol p);

}  // namespace qbv
