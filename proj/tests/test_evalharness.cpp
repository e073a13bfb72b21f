#include <gtest/gtest.h>

#include "support.hpp"
#include "xem/error.hpp"
#include "xem/evalharness.hpp"
#include "xem/util.hpp"

using namespace xem;
using xem::testing::match_pair;
using xem::testing::TempDir;

namespace {

GoldClusters gold_of(const std::map<std::string, std::string>& m) {
  GoldClusters g;
  g.mapping() = m;
  return g;
}

ConfusionCounts brute_force(const Partition& p, const GoldClusters& gold) {
  std::vector<std::string> ids;
  for (const auto& [rid, gid] : gold.mapping()) ids.push_back(rid);
  ConfusionCounts c;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const bool pred = p.entity_of(ids[i]) == p.entity_of(ids[j]);
      const bool truth = gold.mapping().at(ids[i]) == gold.mapping().at(ids[j]);
      c.tp += pred && truth;
      c.fp += pred && !truth;
      c.fn += !pred && truth;
    }
  }
  return c;
}

}  // namespace

TEST(Evalharness, MetricsFromCountsHandArithmetic) {
  const Metrics m = metrics_from_counts({3, 1, 2});
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 2 * 0.75 * 0.6 / 1.35, 1e-12);
  const Metrics zero = metrics_from_counts({0, 0, 5});
  EXPECT_EQ(zero.precision, 0.0);
  EXPECT_EQ(zero.recall, 0.0);
  EXPECT_EQ(zero.f1, 0.0);
  EXPECT_EQ(metrics_from_counts({0, 4, 0}).f1, 0.0);
}

TEST(Evalharness, IdentityAndAllSingletons) {
  const auto gold = gold_of({{"a", "g1"}, {"b", "g1"}, {"c", "g1"}, {"d", "g2"}});
  const auto same = link({match_pair("a", "b"), match_pair("b", "c")}, {}, {"a", "b", "c", "d"});
  const auto r = pairwise_metrics(same, gold);
  EXPECT_EQ(r.counts, (ConfusionCounts{3, 0, 0}));
  EXPECT_EQ(r.metrics.f1, 1.0);
  const auto singles = pairwise_metrics(link({}, {}, {"a", "b", "c", "d"}), gold);
  EXPECT_EQ(singles.counts, (ConfusionCounts{0, 0, 3}));
  EXPECT_EQ(singles.metrics.precision, 0.0);
  EXPECT_EQ(singles.metrics.f1, 0.0);
}

TEST(Evalharness, CombinatoricsEqualBruteForce) {
  CounterRng rng(17);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<std::string> ids;
    std::map<std::string, std::string> g;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("r" + std::to_string(i));
      g[ids.back()] = "g" + std::to_string(rng.below(1 + n / 3));
    }
    std::vector<PairScore> pairs;
    for (std::size_t k = 0; k < n; ++k) {
      const auto x = rng.below(n), y = rng.below(n);
      if (x != y) pairs.push_back(match_pair(ids[x], ids[y]));
    }
    const auto p = link(pairs, {}, ids);
    const auto gold = gold_of(g);
    const auto r = pairwise_metrics(p, gold);
    ASSERT_EQ(r.counts, brute_force(p, gold)) << "instance " << inst;
    EXPECT_GE(r.metrics.f1, 0.0);
    EXPECT_LE(r.metrics.f1, 1.0);
    EXPECT_LE(r.counts.tp + r.counts.fp, n * (n - 1) / 2);
  }
}

TEST(Evalharness, UniverseMismatchListsIds) {
  const auto gold = gold_of({{"a", "g"}, {"b", "g"}, {"zz", "h"}});
  try {
    pairwise_metrics(link({}, {}, {"a", "b", "extra"}), gold);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUniverse);
    EXPECT_NE(std::string(e.what()).find("extra"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(Evalharness, ResultJson) {
  EvalResult r{{3, 1, 2}, metrics_from_counts({3, 1, 2})};
  const auto j = r.to_json("abc");
  EXPECT_EQ(j["counts"]["tp"], 3);
  EXPECT_EQ(j["config_fingerprint"], "abc");
  EXPECT_DOUBLE_EQ(j["precision"].get<double>(), 0.75);
}

TEST(Evalharness, ExperimentIsDeterministic) {
  const XemConfig cfg = xem::testing::small_config(5, 150);
  TempDir d1, d2;
  const auto a = run_experiment(cfg, d1.path());
  const auto b = run_experiment(cfg, d2.path());
  EXPECT_EQ(read_file(d1.path() / "metrics.json"), read_file(d2.path() / "metrics.json"));
  EXPECT_EQ(read_file(d1.path() / "pairs.jsonl"), read_file(d2.path() / "pairs.jsonl"));
  EXPECT_EQ(a.config_fingerprint, cfg.fingerprint());
  EXPECT_GT(a.eval.metrics.f1, 0.8);
  EXPECT_EQ(a.record_count, b.record_count);
  for (const char* name : {"config.json", "records.jsonl", "gold.json", "pairs.jsonl", "partition.json"}) {
    EXPECT_TRUE(std::filesystem::exists(d1.path() / name)) << name;
  }
}

TEST(Evalharness, ZeroDuplicatesMeasuresFalseLinks) {
  XemConfig cfg = xem::testing::small_config(6, 200);
  cfg.generator.duplicates = {DuplicateDistribution::Kind::kFixed, 0.0, 0};
  TempDir d;
  const auto r = run_experiment(cfg, d.path());
  EXPECT_EQ(r.eval.counts.tp, 0u);
  EXPECT_EQ(r.eval.counts.fn, 0u);
  std::uint64_t linked_pairs = 0;
  for (const auto& e : load_partition(ArtifactStore(d.path())).entities()) linked_pairs += e.size() * (e.size() - 1) / 2;
  EXPECT_EQ(r.eval.counts.fp, linked_pairs);
}
