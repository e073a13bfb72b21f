#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/config.hpp"
#include "xem/evalharness.hpp"
#include "xem/gnn.hpp"
#include "xem/linker.hpp"
#include "xem/matcher.hpp"
#include "xem/proxygraph.hpp"
#include "xem/records.hpp"

// Stage functions shared by the CLI, the experiment driver and the service.
// Each reads its inputs from an ArtifactStore and writes its outputs back.
namespace xem {

// Explicit file, else the directory's config.json, else defaults; then the
// seed override.
XemConfig resolve_config(const ArtifactStore& store,
                         const std::optional<std::filesystem::path>& config_path,
                         std::optional<std::uint64_t> seed_override);

// Parsed and normalized. Rejected rows raise kParse.
RecordSet load_records(const ArtifactStore& store, const XemConfig& config);
std::vector<PairScore> load_pairs(const ArtifactStore& store);
std::vector<UnlinkRule> load_unlinks(const ArtifactStore& store);  // empty when absent
Partition load_partition(const ArtifactStore& store);

struct ProxyModel {
  EntityGraph graph;
  GcnParams params;
};

ProxyModel load_proxy(const ArtifactStore& store, const XemConfig& config);

Partition link_records(const RecordSet& records, const std::vector<PairScore>& pairs,
                       const std::vector<UnlinkRule>& rules, const MatcherConfig& matcher);

struct TrainSummary {
  double agreement = 0.0;  // NaN when no pairs are held out
  std::size_t train_pairs = 0;
  std::size_t heldout_pairs = 0;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  std::size_t epochs = 0;

  nlohmann::json to_json() const;
};

struct TrainedProxy {
  ProxyModel model;
  TrainSummary summary;
};

TrainedProxy train_proxy(const RecordSet& records, const Partition& partition,
                         const std::vector<PairScore>& pairs, const XemConfig& config);

SyntheticData stage_generate(const XemConfig& config, ArtifactStore& store);
MatchRun stage_match(const XemConfig& config, ArtifactStore& store, bool force);
Partition stage_link(const XemConfig& config, ArtifactStore& store, bool force);
TrainSummary stage_train(const XemConfig& config, ArtifactStore& store, bool force);
EvalResult stage_eval(const XemConfig& config, ArtifactStore& store, bool force);

}  // namespace xem
