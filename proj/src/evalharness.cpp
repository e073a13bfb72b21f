#include "xem/evalharness.hpp"

#include <chrono>
#include <map>
#include <unordered_map>

#include "xem/error.hpp"
#include "xem/pipeline.hpp"

namespace xem {

using nlohmann::json;

namespace {

std::uint64_t choose2(std::uint64_t n) { return n * (n - 1) / 2; }

}  // namespace

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  if (c.tp == 0) return m;
  m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

json EvalResult::to_json(std::string_view config_fingerprint) const {
  return {{"precision", metrics.precision},
          {"recall", metrics.recall},
          {"f1", metrics.f1},
          {"counts", {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}}},
          {"config_fingerprint", config_fingerprint}};
}

EvalResult pairwise_metrics(const Partition& predicted, const GoldClusters& gold) {
  std::vector<std::string> missing;
  std::size_t predicted_ids = 0;
  for (const auto& e : predicted.entities()) {
    for (const auto& m : e.members) {
      ++predicted_ids;
      if (!gold.mapping().contains(m)) missing.push_back(m + " (not in gold)");
    }
  }
  if (predicted_ids != gold.size() || !missing.empty()) {
    for (const auto& [id, g] : gold.mapping()) {
      if (predicted.entity_of(id) == nullptr) missing.push_back(id + " (not predicted)");
    }
    std::string msg = "record universes differ:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
    throw Error(ErrorCode::kUniverse, msg);
  }

  std::uint64_t predicted_pairs = 0;
  std::uint64_t tp = 0;
  for (const auto& e : predicted.entities()) {
    predicted_pairs += choose2(e.members.size());
    std::unordered_map<std::string_view, std::uint64_t> overlap;
    for (const auto& m : e.members) ++overlap[gold.mapping().at(m)];
    for (const auto& [g, n] : overlap) tp += choose2(n);
  }
  std::map<std::string_view, std::uint64_t> gold_sizes;
  for (const auto& [id, g] : gold.mapping()) ++gold_sizes[g];
  std::uint64_t gold_pairs = 0;
  for (const auto& [g, n] : gold_sizes) gold_pairs += choose2(n);

  EvalResult r;
  r.counts = {tp, predicted_pairs - tp, gold_pairs - tp};
  r.metrics = metrics_from_counts(r.counts);
  return r;
}

ExperimentResult run_experiment(const XemConfig& config, const std::filesystem::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  ArtifactStore store(out_dir);
  store.remove(artifact::kUnlinks);
  stage_generate(config, store);
  const MatchRun run = stage_match(config, store, false);
  const Partition partition = stage_link(config, store, false);

  ExperimentResult out;
  out.eval = stage_eval(config, store, false);
  out.config_fingerprint = config.fingerprint();
  out.record_count = partition.record_count();
  out.entity_count = partition.entities().size();
  for (const auto& s : run.scores) out.match_pairs += s.match_class == MatchClass::kMatch ? 1 : 0;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace xem
