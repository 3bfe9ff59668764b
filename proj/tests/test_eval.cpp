#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qbv/dsp.hpp"
#include "qbv/errors.hpp"
#include "qbv/eval.hpp"
#include "qbv/metrics.hpp"
#include "qbv/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace qbv;
using namespace qbv::test;

namespace {

// refs_per_fold references in each of n_folds folds, imits imitations each,
// every reference given the other references of its fold as hard negatives
// (capped at 9).
Manifest layout_manifest(std::size_t n_folds, std::size_t refs_per_fold, std::size_t imits) {
  Manifest m;
  for (std::size_t f = 0; f < n_folds; ++f) {
    for (std::size_t r = 0; r < refs_per_fold; ++r) {
      ReferenceRecord rec;
      rec.id = "r" + std::to_string(f) + "_" + std::to_string(r);
      rec.path = rec.id + ".wav";
      rec.fold = static_cast<int>(f);
      std::vector<std::string> neg;
      for (std::size_t o = 0; o < refs_per_fold && neg.size() < 9; ++o) {
        if (o != r) neg.push_back("r" + std::to_string(f) + "_" + std::to_string(o));
      }
      rec.hard_negatives = neg;
      m.references.push_back(rec);
      for (std::size_t k = 0; k < imits; ++k) {
        m.imitations.push_back({rec.id + "_i" + std::to_string(k), rec.id + "_i.wav", rec.id});
      }
    }
  }
  m.validate();
  return m;
}

class OracleSystem : public RetrievalSystem {
 public:
  explicit OracleSystem(const Manifest& m) : m_(m) {}
  std::string name() const override { return "oracle"; }
  void train(std::span<const TrainingPair> pairs) override { trained_.assign(pairs.begin(), pairs.end()); }
  std::vector<double> score(const std::string& imitation_id, std::span<const std::string> ids) override {
    std::string target;
    for (const auto& im : m_.imitations) if (im.id == imitation_id) target = im.ref_id;
    std::vector<double> s;
    for (const auto& id : ids) s.push_back(id == target ? 1.0 : 0.0);
    return s;
  }
  std::vector<TrainingPair> trained_;

 private:
  const Manifest& m_;
};

class RandomSystem : public RetrievalSystem {
 public:
  explicit RandomSystem(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<double> score(const std::string&, std::span<const std::string> ids) override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s;
    for (std::size_t i = 0; i < ids.size(); ++i) s.push_back(u(rng_));
    return s;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

TEST(Metrics, MrrExamples) {
  const std::vector<std::size_t> a{1, 1, 1}, b{1, 2, 4}, c{52};
  EXPECT_DOUBLE_EQ(mrr(a), 1.0);
  EXPECT_NEAR(mrr(b), 7.0 / 12.0, 1e-12);
  EXPECT_NEAR(mrr(b), 0.58333333333, 1e-10);
  EXPECT_NEAR(mrr(c), 1.0 / 52.0, 1e-15);
  EXPECT_THROW(mrr(std::vector<std::size_t>{}), std::invalid_argument);
  EXPECT_THROW(mrr(std::vector<std::size_t>{1, 0}), std::invalid_argument);
}

TEST(Metrics, RecallExamples) {
  EXPECT_NEAR(recall_at_k(std::vector<std::size_t>{1, 3, 2}, 2), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::size_t>{1, 3, 2}, 3), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::size_t>{2, 2}, 1), 0.0);
  EXPECT_THROW(recall_at_k(std::vector<std::size_t>{}, 1), std::invalid_argument);
}

TEST(Metrics, Properties) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::size_t> ranks(1 + rng() % 20);
    for (auto& r : ranks) r = 1 + rng() % 10;
    const double m = mrr(ranks);
    auto shuffled = ranks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(mrr(shuffled), m, 1e-12);
    double prev = 0.0;
    for (std::size_t k = 1; k <= 11; ++k) {
      const double r = recall_at_k(ranks, k);
      EXPECT_GE(r, prev);
      EXPECT_LE(r, 1.0);
      prev = r;
    }
    EXPECT_GE(m, recall_at_k(ranks, 1));
  }
}

TEST(Metrics, RankMatchesExhaustiveSort) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<double> scores(n);
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 4) / 4.0;  // frequent ties
      ids[i] = std::string(1, static_cast<char>('a' + (rng() % 26))) + std::to_string(i);
    }
    const std::size_t target = rng() % n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : ids[a] < ids[b];
    });
    const std::size_t expected = static_cast<std::size_t>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
    ASSERT_EQ(rank_of_target(scores, ids, target), expected);
  }
}

TEST(Metrics, ReportInvariants) {
  const EvalReport r = make_report(Protocol::fine, {{"a", 1}, {"b", 2}, {"c", 4}}, std::vector<std::size_t>{1, 2});
  EXPECT_NEAR(r.mrr, 7.0 / 12.0, 1e-12);
  EXPECT_NEAR(r.mr_at.at(1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.mr_at.at(2), 2.0 / 3.0, 1e-15);
}

TEST(Manifest, ParseWriteRoundTrip) {
  const std::string text =
      R"({"type":"reference","id":"a","path":"refs/a.wav","class":"dog","fold":0,"hard_negatives":["b"]})"
      "\n"
      R"({"type":"reference","id":"b","path":"/abs/b.wav","fold":1})"
      "\n\n"
      R"({"type":"imitation","id":"x","path":"imits/x.wav","ref_id":"a"})"
      "\n";
  std::istringstream in(text);
  const Manifest m = parse_manifest(in, "/data");
  ASSERT_EQ(m.references.size(), 2u);
  ASSERT_EQ(m.imitations.size(), 1u);
  EXPECT_EQ(m.references[0].label.value(), "dog");
  EXPECT_TRUE(m.has_folds());
  EXPECT_EQ(m.folds(), (std::vector<int>{0, 1}));
  EXPECT_EQ(m.resolve("refs/a.wav"), std::filesystem::path("/data/refs/a.wav"));
  EXPECT_EQ(m.resolve("/abs/b.wav"), std::filesystem::path("/abs/b.wav"));
  std::ostringstream out;
  write_manifest(out, m);
  std::istringstream again(out.str());
  const Manifest back = parse_manifest(again, "/data");
  EXPECT_EQ(back.references[0].hard_negatives.value(), std::vector<std::string>{"b"});
  EXPECT_EQ(back.imitations[0].ref_id, "a");
}

TEST(Manifest, ValidationErrors) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_manifest(in);
  };
  EXPECT_THROW(parse("{not json}\n"), FormatError);
  EXPECT_THROW(parse(R"({"type":"other","id":"a","path":"p"})"), FormatError);
  EXPECT_THROW(parse(R"({"type":"imitation","id":"x","path":"p","ref_id":"missing"})"), std::invalid_argument);
  EXPECT_THROW(parse(R"({"type":"reference","id":"a","path":"p"})"
                     "\n"
                     R"({"type":"reference","id":"a","path":"q"})"),
               std::invalid_argument);
  EXPECT_THROW(parse(R"({"type":"reference","id":"a","path":"p","fold":0})"
                     "\n"
                     R"({"type":"reference","id":"b","path":"q"})"),
               std::invalid_argument);
  EXPECT_THROW(parse(R"({"type":"reference","id":"a","path":"p","hard_negatives":["a"]})"), std::invalid_argument);
  EXPECT_THROW(parse(R"({"type":"reference","id":"a","path":"p","hard_negatives":["zz"]})"), std::invalid_argument);
}

TEST(Coarse, PerfectOracleAndNoLeak) {
  const Manifest m = layout_manifest(4, 5, 2);
  OracleSystem oracle(m);
  const CoarseReport r = run_coarse(m, oracle);
  ASSERT_EQ(r.folds.size(), 4u);
  for (const auto& f : r.folds) {
    EXPECT_DOUBLE_EQ(f.report.mrr, 1.0);
    EXPECT_EQ(f.report.per_query_ranks.size(), 10u);
  }
  EXPECT_DOUBLE_EQ(r.mrr.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.mrr.std, 0.0);
  EXPECT_DOUBLE_EQ(r.mr_at.at(1).mean, 1.0);
  for (int fold = 0; fold < 4; ++fold) {
    const auto pairs = training_pairs_excluding_fold(m, fold);
    EXPECT_EQ(pairs.size(), 30u);
    for (const auto& p : pairs) EXPECT_NE(*m.reference(p.reference_id).fold, fold);
  }
}

TEST(Coarse, RandomRankingMatchesHarmonicMean) {
  // 10 folds x 52 references x 4 imitations = 2080 queries over 52 candidates
  const Manifest m = layout_manifest(10, 52, 4);
  RandomSystem random(3);
  const CoarseReport r = run_coarse(m, random);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& f : r.folds) {
    for (const auto& q : f.report.per_query_ranks) {
      total += 1.0 / q.rank;
      ++n;
    }
  }
  ASSERT_GE(n, 2000u);
  EXPECT_NEAR(harmonic_over_n(52), 0.0873, 1e-4);
  EXPECT_NEAR(total / n, harmonic_over_n(52), 0.01);
  EXPECT_NEAR(r.mrr.mean, harmonic_over_n(52), 0.01);
}

TEST(Coarse, StdIsPopulationStdOfFoldMeans) {
  class FoldBiased : public RetrievalSystem {
   public:
    std::string name() const override { return "biased"; }
    std::vector<double> score(const std::string& imitation_id, std::span<const std::string> ids) override {
      // fold 0 queries rank their target first, fold 1 queries last
      const bool good = imitation_id.rfind("r0_", 0) == 0;
      const std::string target = imitation_id.substr(0, imitation_id.find("_i"));
      std::vector<double> s;
      for (const auto& id : ids) s.push_back((id == target) == good ? 1.0 : 0.0);
      return s;
    }
  } sys;
  const Manifest m = layout_manifest(2, 4, 1);
  const CoarseReport r = run_coarse(m, sys);
  // fold MRRs 1 and 1/4
  EXPECT_NEAR(r.mrr.mean, 0.625, 1e-12);
  EXPECT_NEAR(r.mrr.std, 0.375, 1e-12);
}

TEST(Coarse, Errors) {
  Manifest m = layout_manifest(2, 3, 1);
  m.references[0].fold = 7;  // a fold with one reference
  OracleSystem oracle(m);
  EXPECT_THROW(run_coarse(m, oracle), std::invalid_argument);
  Manifest nofolds = layout_manifest(1, 3, 1);
  for (auto& r : nofolds.references) r.fold.reset();
  EXPECT_THROW(run_coarse(nofolds, oracle), std::invalid_argument);
}

TEST(Fine, OracleRandomAndCandidateSize) {
  const Manifest m = layout_manifest(20, 10, 10);  // 9 hard negatives each, 2000 queries
  OracleSystem oracle(m);
  FineOptions all;
  all.split = false;
  EXPECT_DOUBLE_EQ(run_fine(m, oracle, all).mrr, 1.0);

  class SizeProbe : public RetrievalSystem {
   public:
    std::string name() const override { return "probe"; }
    std::vector<double> score(const std::string&, std::span<const std::string> ids) override {
      sizes.push_back(ids.size());
      return std::vector<double>(ids.size(), 0.0);
    }
    std::vector<std::size_t> sizes;
  } probe;
  run_fine(m, probe, all);
  for (std::size_t s : probe.sizes) ASSERT_EQ(s, 10u);

  RandomSystem random(4);
  const EvalReport r = run_fine(m, random, all);
  ASSERT_GE(r.per_query_ranks.size(), 2000u);
  EXPECT_NEAR(harmonic_over_n(10), 0.29290, 1e-5);
  EXPECT_NEAR(r.mrr, harmonic_over_n(10), 0.01);
}

TEST(Fine, SeededSplitTrainsOnOtherHalf) {
  const Manifest m = layout_manifest(2, 10, 2);
  const auto [train_a, eval_a] = split_references(m, 5);
  const auto [train_b, eval_b] = split_references(m, 5);
  EXPECT_EQ(train_a, train_b);
  EXPECT_EQ(train_a.size(), 10u);
  EXPECT_EQ(eval_a.size(), 10u);
  for (const auto& id : train_a) EXPECT_EQ(std::count(eval_a.begin(), eval_a.end(), id), 0);
  OracleSystem oracle(m);
  FineOptions o;
  o.seed = 5;
  const EvalReport r = run_fine(m, oracle, o);
  EXPECT_EQ(r.per_query_ranks.size(), 20u);
  EXPECT_EQ(oracle.trained_.size(), 20u);
  for (const auto& p : oracle.trained_) {
    EXPECT_NE(std::find(train_a.begin(), train_a.end(), p.reference_id), train_a.end());
  }
}

TEST(Fine, MissingTargetGuard) {
  const Manifest m = layout_manifest(1, 3, 1);
  OracleSystem oracle(m);
  const std::vector<std::string> candidates{"r0_1", "r0_2"};
  EXPECT_THROW(rank_query(oracle, "r0_0_i0", candidates, "r0_0"), std::logic_error);
}

TEST(Reports, JsonAndTable) {
  const Manifest m = layout_manifest(3, 4, 1);
  OracleSystem oracle(m);
  const CoarseReport r = run_coarse(m, oracle);
  const auto j = nlohmann::json::parse(report_json(r, "oracle"));
  EXPECT_EQ(j["backend"], "oracle");
  EXPECT_EQ(j["folds"].size(), 3u);
  const std::string table = report_table(r, "oracle");
  EXPECT_NE(table.find("MRR"), std::string::npos);
  EXPECT_NE(table.find("MR@1"), std::string::npos);
  EXPECT_NE(table.find("1.000 +- 0.000"), std::string::npos);
  FineOptions all;
  all.split = false;
  const std::string fine = report_table(run_fine(m, oracle, all), "oracle");
  EXPECT_EQ(fine.substr(0, fine.find('\n')), "protocol  backend   MRR             MR@1            MR@2");
}

TEST(Synthetic, CountsFoldsAndDeterminism) {
  SyntheticConfig c;
  c.sample_rate = 8000;
  c.duration_seconds = 0.5;
  const SyntheticDataset a = gen_synthetic(c);
  const SyntheticDataset b = gen_synthetic(c);
  EXPECT_EQ(a.manifest.references.size(), 32u);
  EXPECT_EQ(a.manifest.imitations.size(), 128u);
  EXPECT_EQ(a.references.size(), 32u);
  EXPECT_EQ(a.imitations.size(), 128u);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_EQ(a.references[i].samples, b.references[i].samples);
    EXPECT_EQ(*a.manifest.references[i].fold, static_cast<int>(i % 10));
    const auto& neg = *a.manifest.references[i].hard_negatives;
    EXPECT_FALSE(neg.empty());
    EXPECT_LE(neg.size(), 9u);
    for (const auto& id : neg) {
      const std::size_t j = *a.manifest.find_reference(id);
      EXPECT_EQ(a.families[j], a.families[i]);
    }
  }
  for (std::size_t i = 0; i < 128; ++i) {
    EXPECT_EQ(a.imitations[i].samples, b.imitations[i].samples);
    EXPECT_EQ(a.imitations[i].samples.size(), 4000u);
    for (float s : a.imitations[i].samples) ASSERT_TRUE(std::isfinite(s));
  }
  c.seed = 1;
  EXPECT_NE(gen_synthetic(c).imitations[0].samples, a.imitations[0].samples);
  c.n_classes = 1;
  EXPECT_THROW(gen_synthetic(c), std::invalid_argument);
}

TEST(Synthetic, SeparableUnderBaselineSimilarity) {
  SyntheticConfig c;
  c.sample_rate = 16000;
  c.duration_seconds = 1.0;
  c.n_classes = 12;
  c.imitations_per_class = 2;
  const SyntheticDataset d = gen_synthetic(c);
  BaselineConfig b;
  b.cqt.sample_rate = 16000;
  b.cqt.n_octaves = 7;
  b.cqt.hop = 256;
  const BaselineFeaturizer f(b);
  std::vector<std::vector<double>> rf, imf;
  for (const auto& r : d.references) rf.push_back(f(r).values);
  for (const auto& i : d.imitations) imf.push_back(f(i).values);
  std::size_t good = 0, total = 0;
  for (std::size_t cls = 0; cls < 12; ++cls) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double own = cosine_similarity(rf[cls], imf[cls * 2 + k]);
      for (std::size_t other = 0; other < 12; ++other) {
        if (other == cls) continue;
        for (std::size_t k2 = 0; k2 < 2; ++k2) {
          good += own > cosine_similarity(rf[cls], imf[other * 2 + k2]);
          ++total;
        }
      }
    }
  }
  EXPECT_GE(static_cast<double>(good) / total, 0.9);
}

TEST(Synthetic, WriteAndReloadThroughManifest) {
  SyntheticConfig c;
  c.n_classes = 3;
  c.imitations_per_class = 2;
  c.sample_rate = 8000;
  c.duration_seconds = 0.2;
  const SyntheticDataset d = gen_synthetic(c);
  TempDir dir;
  const auto path = write_synthetic(d, dir.path);
  const Manifest m = read_manifest(path);
  ClipStore store(m, 8000);
  EXPECT_EQ(store.get("ref_1").samples, d.references[1].samples);
  EXPECT_EQ(store.get("imit_2_1").samples, d.imitations[5].samples);
  EXPECT_THROW(store.get("nope"), std::out_of_range);

  const HoldoutSplit split = holdout_split(m, store);
  EXPECT_EQ(split.train.size(), 3u);
  EXPECT_EQ(split.validation.queries.size(), 3u);
  EXPECT_EQ(split.validation.candidates.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(split.validation.targets[i], i);
    EXPECT_EQ(split.train[i].imitation_id, "imit_" + std::to_string(i) + "_0");
  }
  const PairedDataset p = paired_dataset(split.train, store);
  EXPECT_EQ(p.references.size(), 3u);
  EXPECT_EQ(p.imitations[2].size(), 1u);
}

TEST(Systems, TwoDftBeatsRandomOnSynthetic) {
  SyntheticConfig c;
  c.sample_rate = 16000;
  c.duration_seconds = 1.0;
  c.n_classes = 20;
  c.imitations_per_class = 2;
  c.n_folds = 2;
  const SyntheticDataset d = gen_synthetic(c);
  ClipStore store(16000);
  for (const auto& r : d.references) store.put(r);
  for (const auto& i : d.imitations) store.put(i);
  BaselineConfig b;
  b.cqt.sample_rate = 16000;
  b.cqt.n_octaves = 7;
  b.cqt.hop = 256;
  TwoDftSystem sys(store, b, 1.0);
  const CoarseReport r = run_coarse(d.manifest, sys);
  EXPECT_GT(r.mrr.mean, harmonic_over_n(10) + 0.1);
}

TEST(Systems, ImportedScoresAreCosines) {
  const QbveBlock refs{2, {"a", "b"}, {1, 0, 0, 2}};
  const QbveBlock imits{2, {"x"}, {1, 1}};
  ImportedSystem sys(refs, imits);
  const std::vector<std::string> ids{"a", "b"};
  const auto s = sys.score("x", ids);
  EXPECT_NEAR(s[0], 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_NEAR(s[1], 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_THROW(sys.score("y", ids), std::out_of_range);
}
