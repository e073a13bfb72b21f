#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "xem/config.hpp"
#include "xem/linker.hpp"
#include "xem/synthgen.hpp"

namespace xem {

// Over unordered record pairs.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  bool operator==(const ConfusionCounts&) const = default;
};

struct Metrics {
  double precision = 0.0;  // 0 when nothing is predicted
  double recall = 0.0;
  double f1 = 0.0;  // 0 whenever tp = 0
};

Metrics metrics_from_counts(const ConfusionCounts& counts);

struct EvalResult {
  ConfusionCounts counts;
  Metrics metrics;

  nlohmann::json to_json(std::string_view config_fingerprint) const;
};

// Per-cluster combinatorics. Throws kUniverse listing ids present on only
// one side.
EvalResult pairwise_metrics(const Partition& predicted, const GoldClusters& gold);

struct ExperimentResult {
  EvalResult eval;
  std::string config_fingerprint;
  std::size_t record_count = 0;
  std::size_t entity_count = 0;
  std::size_t match_pairs = 0;
  double seconds = 0.0;
};

// generate -> match -> link -> eval into `out_dir`, leaving every
// intermediate artifact and metrics.json behind.
ExperimentResult run_experiment(const XemConfig& config, const std::filesystem::path& out_dir);

}  // namespace xem
