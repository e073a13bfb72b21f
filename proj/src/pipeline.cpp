#include "xem/pipeline.hpp"

#include <cmath>
#include <limits>

#include "xem/error.hpp"

namespace xem {

using nlohmann::json;

namespace {

json parse_json_artifact(const ArtifactStore& store, std::string_view name) {
  try {
    return json::parse(store.read(name));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string(name) + ": " + e.what());
  }
}

void check_inputs(const ArtifactStore& store, const XemConfig& config, bool force,
                  std::initializer_list<std::string_view> names) {
  const std::string fp = config.fingerprint();
  for (auto n : names) {
    store.read(n).size();  // surfaces "run X first" before any fingerprint complaint
    store.check_fingerprint(n, fp, force);
  }
}

}  // namespace

XemConfig resolve_config(const ArtifactStore& store,
                         const std::optional<std::filesystem::path>& config_path,
                         std::optional<std::uint64_t> seed_override) {
  if (config_path) return load_config_file(*config_path, seed_override);
  if (store.exists(artifact::kConfig)) {
    return load_config_file(store.path_of(artifact::kConfig), seed_override);
  }
  XemConfig cfg;
  if (seed_override) cfg.set_seed(*seed_override);
  cfg.generator = acceptance_profile(cfg.seed);
  return cfg;
}

RecordSet load_records(const ArtifactStore& store, const XemConfig& config) {
  ParsedRecords parsed = parse_records(store.read(artifact::kRecords), RecordFormat::kJsonl, config.schema);
  if (!parsed.rejected.empty()) {
    const RowIssue& first = parsed.rejected.front();
    throw Error(ErrorCode::kParse, std::to_string(parsed.rejected.size()) +
                                       " rejected rows in records.jsonl; first at line " +
                                       std::to_string(first.line) + ": " + first.message);
  }
  return normalize_records(parsed.records);
}

std::vector<PairScore> load_pairs(const ArtifactStore& store) {
  return read_pair_scores(store.read(artifact::kPairs));
}

std::vector<UnlinkRule> load_unlinks(const ArtifactStore& store) {
  if (!store.exists(artifact::kUnlinks)) return {};
  return read_unlink_log(store.read(artifact::kUnlinks));
}

Partition load_partition(const ArtifactStore& store) {
  return Partition::from_json(parse_json_artifact(store, artifact::kPartition));
}

ProxyModel load_proxy(const ArtifactStore& store, const XemConfig& config) {
  ProxyModel out;
  out.graph = EntityGraph::from_json(parse_json_artifact(store, artifact::kGraph));
  const FeatureCodec codec = config.make_codec();
  if (!(out.graph.codec() == codec)) {
    throw Error(ErrorCode::kFingerprint, "graph.json was encoded with a different feature codec; "
                                         "run train-proxy again");
  }
  out.params = model_from_json(parse_json_artifact(store, artifact::kModel), codec);
  return out;
}

Partition link_records(const RecordSet& records, const std::vector<PairScore>& pairs,
                       const std::vector<UnlinkRule>& rules, const MatcherConfig& matcher) {
  return link(pairs, rules, records.ids(), completeness_picker(records, matcher.anonymous));
}

json TrainSummary::to_json() const {
  json out = {{"train_pairs", train_pairs},
              {"heldout_pairs", heldout_pairs},
              {"initial_loss", initial_loss},
              {"best_loss", best_loss},
              {"epochs", epochs}};
  out["agreement"] = std::isnan(agreement) ? json(nullptr) : json(agreement);
  return out;
}

TrainedProxy train_proxy(const RecordSet& records, const Partition& partition,
                         const std::vector<PairScore>& pairs, const XemConfig& config) {
  const FeatureCodec codec = config.make_codec();
  TrainedProxy out;
  out.model.graph = build_graph(partition, records, codec, &config.matcher.anonymous);
  const auto pairs_all = make_training_set(pairs, records.ids(), config.training.neg_ratio, config.seed);
  const TrainingSplit split =
      split_training_set(pairs_all, config.training.heldout_fraction, config.seed);
  const TrainResult result = train(out.model.graph, split.train, config.training.model);
  out.model.params = result.params;

  TrainSummary& s = out.summary;
  s.train_pairs = split.train.size();
  s.heldout_pairs = split.heldout.size();
  s.initial_loss = result.losses.front();
  s.best_loss = *std::min_element(result.losses.begin(), result.losses.end());
  s.epochs = config.training.model.epochs;
  s.agreement = split.heldout.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : agreement(out.model.params, out.model.graph, split.heldout);
  return out;
}

SyntheticData stage_generate(const XemConfig& config, ArtifactStore& store) {
  if (!(config.schema == organization_schema())) {
    throw Error(ErrorCode::kConfig, "the synthetic generator only supports the organization schema");
  }
  SyntheticData data = generate(config.generator);
  const std::string fp = config.fingerprint();
  store.write(artifact::kConfig, config.to_json().dump(2) + "\n", fp);
  store.write(artifact::kRecords, serialize_records(data.records, RecordFormat::kJsonl), fp);
  store.write(artifact::kGold, data.gold.to_json().dump() + "\n", fp);
  return data;
}

MatchRun stage_match(const XemConfig& config, ArtifactStore& store, bool force) {
  check_inputs(store, config, force, {artifact::kRecords});
  const RecordSet records = load_records(store, config);
  MatchRun run = run_matching(records, config.matcher);
  store.write(artifact::kPairs, write_pair_scores(run.scores), config.fingerprint());
  return run;
}

Partition stage_link(const XemConfig& config, ArtifactStore& store, bool force) {
  check_inputs(store, config, force, {artifact::kRecords, artifact::kPairs});
  const RecordSet records = load_records(store, config);
  Partition p = link_records(records, load_pairs(store), load_unlinks(store), config.matcher);
  store.write(artifact::kPartition, p.to_json().dump() + "\n", config.fingerprint());
  return p;
}

TrainSummary stage_train(const XemConfig& config, ArtifactStore& store, bool force) {
  check_inputs(store, config, force, {artifact::kRecords, artifact::kPairs, artifact::kPartition});
  const RecordSet records = load_records(store, config);
  const TrainedProxy trained =
      train_proxy(records, load_partition(store), load_pairs(store), config);
  const std::string fp = config.fingerprint();
  store.write(artifact::kGraph, trained.model.graph.to_json().dump() + "\n", fp);
  store.write(artifact::kModel, model_to_json(trained.model.params).dump() + "\n", fp);
  store.write(artifact::kTraining, trained.summary.to_json().dump(2) + "\n", fp);
  return trained.summary;
}

EvalResult stage_eval(const XemConfig& config, ArtifactStore& store, bool force) {
  check_inputs(store, config, force, {artifact::kGold, artifact::kPartition});
  const GoldClusters gold = GoldClusters::from_json(parse_json_artifact(store, artifact::kGold));
  EvalResult r = pairwise_metrics(load_partition(store), gold);
  const std::string fp = config.fingerprint();
  store.write(artifact::kMetrics, r.to_json(fp).dump(2) + "\n", fp);
  return r;
}

}  // namespace xem
