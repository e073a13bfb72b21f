#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "support.hpp"
#include "xem/linker.hpp"
#include "xem/util.hpp"

using namespace xem;
using xem::testing::make_record;
using xem::testing::match_pair;

namespace {

std::vector<std::vector<std::string>> groups(const Partition& p) {
  std::vector<std::vector<std::string>> out;
  for (const auto& e : p.entities()) out.push_back(e.members);
  return out;
}

// Components by Floyd-Warshall reachability over the surviving Match edges.
std::vector<std::vector<std::string>> closure_oracle(const std::vector<std::string>& ids,
                                                     const std::vector<PairScore>& pairs,
                                                     const std::vector<UnlinkRule>& rules) {
  const std::size_t n = ids.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  auto idx = [&](const std::string& id) {
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
  };
  for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
  for (const auto& p : pairs) {
    if (p.match_class != MatchClass::kMatch) continue;
    bool removed = false;
    for (const auto& r : rules) removed = removed || r.pair == p.pair;
    if (removed) continue;
    reach[idx(p.pair.a)][idx(p.pair.b)] = reach[idx(p.pair.b)][idx(p.pair.a)] = true;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  std::vector<std::vector<std::string>> out;
  std::vector<bool> seen(n, false);
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& id : sorted) {
    const auto i = idx(id);
    if (seen[i]) continue;
    std::vector<std::string> comp;
    for (std::size_t j = 0; j < n; ++j) {
      if (reach[i][j]) {
        seen[j] = true;
        comp.push_back(ids[j]);
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(comp);
  }
  return out;
}

}  // namespace

TEST(Linker, TransitiveChain) {
  const std::vector<std::string> ids{"A", "B", "C", "D"};
  const auto p = link({match_pair("A", "B"), match_pair("B", "C")}, {}, ids);
  EXPECT_EQ(groups(p), (std::vector<std::vector<std::string>>{{"A", "B", "C"}, {"D"}}));
  EXPECT_EQ(p.entity_of("C")->entity_id, "A");
}

TEST(Linker, UnlinkRemovesOnlyTheEdge) {
  const std::vector<std::string> ids{"A", "B", "C"};
  const UnlinkRule rule{canonical_pair("A", "B"), "2024-01-01T00:00:00Z", "steward"};
  const auto p = link({match_pair("A", "B"), match_pair("B", "C")}, {rule}, ids);
  EXPECT_EQ(groups(p), (std::vector<std::vector<std::string>>{{"A"}, {"B", "C"}}));
  EXPECT_TRUE(p.non_separating_rules().empty());

  const auto tri = link({match_pair("A", "B"), match_pair("B", "C"), match_pair("A", "C")}, {rule}, ids);
  EXPECT_EQ(groups(tri), (std::vector<std::vector<std::string>>{{"A", "B", "C"}}));
  EXPECT_EQ(tri.non_separating_rules(), (std::vector<RecordPair>{{"A", "B"}}));
}

TEST(Linker, ClericalAndNonMatchDoNotLink) {
  const auto p = link({match_pair("A", "B", MatchClass::kClerical), match_pair("B", "C", MatchClass::kNonMatch)}, {},
                      {"A", "B", "C"});
  EXPECT_EQ(p.entities().size(), 3u);
}

TEST(Linker, AgreesWithClosureOracleAndIgnoresOrder) {
  CounterRng rng(2024);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("r" + std::to_string(i));
    std::vector<PairScore> pairs;
    std::vector<UnlinkRule> rules;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!rng.bernoulli(0.2)) continue;
        const double r = rng.uniform();
        pairs.push_back(match_pair(ids[i], ids[j], r < 0.7 ? MatchClass::kMatch
                                                            : (r < 0.85 ? MatchClass::kClerical : MatchClass::kNonMatch)));
        if (rng.bernoulli(0.1)) rules.push_back({canonical_pair(ids[i], ids[j]), "", "t"});
      }
    }
    const Partition base = link(pairs, rules, ids);
    ASSERT_EQ(groups(base), closure_oracle(ids, pairs, rules)) << "instance " << inst;
    std::size_t total = 0;
    for (const auto& e : base.entities()) {
      total += e.size();
      EXPECT_EQ(e.edges.size(), e.size() - 1);
      EXPECT_EQ(e.entity_id, e.members.front());
    }
    EXPECT_EQ(total, n);
    for (int perm = 0; perm < 20; ++perm) {
      auto shuffled = pairs;
      auto shuffled_ids = ids;
      for (std::size_t k = shuffled.size(); k > 1; --k) std::swap(shuffled[k - 1], shuffled[rng.below(k)]);
      for (std::size_t k = shuffled_ids.size(); k > 1; --k) std::swap(shuffled_ids[k - 1], shuffled_ids[rng.below(k)]);
      EXPECT_TRUE(link(shuffled, rules, shuffled_ids) == base);
    }
  }
}

TEST(Linker, RepresentativeSelection) {
  const Schema s({{"a", AttributeKind::kName}, {"b", AttributeKind::kName}, {"c", AttributeKind::kPhone}});
  const RecordSet rs(s, {make_record("r1", {"x", "y", "5550100"}), make_record("r2", {"x", std::nullopt, std::nullopt}),
                         make_record("r10", {"x", "y", std::nullopt}), make_record("r3", {"x", "y", "9999999999"}),
                         make_record("r7", {std::nullopt, std::nullopt, std::nullopt})});
  const auto& anon = default_anonymous_values();
  EXPECT_EQ(select_representative({"r1", "r2"}, rs, anon), "r1");
  EXPECT_EQ(select_representative({"r2", "r10", "r3"}, rs, anon), "r10");
  EXPECT_EQ(select_representative({"r7"}, rs, anon), "r7");

  const auto p = link({match_pair("r2", "r1")}, {}, rs.ids(), completeness_picker(rs, anon));
  const Entity* e = p.entity_of("r2");
  EXPECT_EQ(e->representative, "r1");
  EXPECT_EQ(e->entity_id, "r1");
  ASSERT_EQ(e->edges.size(), 1u);
  EXPECT_EQ(e->edges[0], (std::pair<std::string, std::string>{"r2", "r1"}));
}

TEST(Linker, SizeHistogram) {
  const auto p = link({match_pair("A", "B"), match_pair("B", "C")}, {}, {"A", "B", "C", "D"});
  EXPECT_EQ(entity_size_histogram(p), (std::map<std::size_t, std::size_t>{{1, 1}, {3, 1}}));
  EXPECT_TRUE(entity_size_histogram(Partition()).empty());

  const auto& run = xem::testing::small_run();
  std::size_t mass = 0;
  for (const auto& [size, count] : entity_size_histogram(run.partition)) mass += size * count;
  EXPECT_EQ(mass, run.records.size());
}

TEST(Linker, PartitionJsonRoundTrip) {
  const UnlinkRule rule{canonical_pair("A", "B"), "", "t"};
  const auto p = link({match_pair("A", "B"), match_pair("B", "C"), match_pair("A", "C")}, {rule}, {"A", "B", "C", "D"});
  EXPECT_TRUE(Partition::from_json(p.to_json()) == p);
  const auto j = p.to_json();
  EXPECT_EQ(j["entities"][0]["id"], "A");
  EXPECT_EQ(j["entities"][0]["members"].size(), 3u);
}

TEST(Linker, UnlinkLogRoundTrip) {
  const UnlinkRule r{canonical_pair("b", "a"), "2024-05-01T10:00:00Z", "ann"};
  const std::string log = unlink_rule_to_json(r).dump() + "\n" + unlink_rule_to_json(r).dump() + "\n";
  const auto rules = read_unlink_log(log);
  ASSERT_EQ(rules.size(), 2u);
  EXPECT_EQ(rules[0], r);
}
