#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/gnn.hpp"
#include "xem/linker.hpp"
#include "xem/matcher.hpp"
#include "xem/proxygraph.hpp"
#include "xem/records.hpp"

namespace xem {

struct MaskConfig {
  std::size_t iterations = 300;
  double learning_rate = 0.1;
  double sparsity = 0.05;  // weight on mean activation
  double entropy = 0.1;    // weight on mean activation entropy
  double init_logit = 0.0;
  double init_noise = 0.0;  // half-width of seeded uniform jitter on the initial logits
  std::uint64_t seed = 42;

  void validate() const;
};

using AttributeScores = std::vector<std::pair<std::string, double>>;

struct FeatureMask {
  RecordPair pair;
  std::vector<double> logits;
  std::vector<double> activation;
  std::vector<std::size_t> active_dims;  // dims present on some node the pair's prediction reads
  double p_original = 0.5;
  double p_masked = 0.5;
  double fidelity = 0.0;  // |p_masked - p_original|
  AttributeScores rollup;  // schema order: mean activation over each attribute's active dims

  // Highest rollups first; ties by schema order.
  AttributeScores top(std::size_t k) const;
  double sparsity() const;  // fraction of active dims with activation above 0.5
  nlohmann::json to_json() const;
};

// Optimizes one mask shared by all nodes so the masked proxy keeps its
// rounded original decision on (u, v). Edges are left untouched.
FeatureMask explain_pair_mask(const GcnParams& params, const EntityGraph& graph,
                              std::string_view u, std::string_view v, const MaskConfig& config);

// Proxy probability with feature columns multiplied by `scale`.
double masked_probability(const GcnParams& params, const EntityGraph& graph, std::size_t u,
                          std::size_t v, std::span<const double> scale);

struct MaskSuiteStats {
  std::vector<double> fidelity;
  std::vector<double> sparsity;
  std::vector<double> identity_fidelity;  // all-ones mask control, per pair
  double top_deletion_mean = 0.0;
  double random_deletion_mean = 0.0;
  std::size_t deleted_attributes = 3;

  double fraction_fidelity_within(double tolerance) const;
  double mean_sparsity() const;
};

MaskSuiteStats mask_fidelity_suite(const GcnParams& params, const EntityGraph& graph,
                                   const std::vector<RecordPair>& pairs, const MaskConfig& config,
                                   std::size_t deleted_attributes = 3,
                                   std::uint64_t deletion_seed = 7);

struct AttributionConfig {
  std::size_t n_samples = 256;
  std::uint64_t seed = 42;
};

struct Attribution {
  RecordPair pair;
  AttributeScores contributions;  // schema order; positive pushes toward Match
  double intercept = 0.0;
  double surrogate_r2 = 0.0;

  double contribution(std::string_view attribute) const;
  nlohmann::json to_json() const;
};

using PairScorer = std::function<double(const Record&, const Record&)>;

// Scorer backed by the matching engine's total.
PairScorer engine_scorer(const Schema& schema, const MatcherConfig& config);

// Least-squares surrogate over random attribute subsets; attributes outside a
// subset are set missing on both records.
Attribution attribute_contributions(const PairScorer& scorer, const Record& a, const Record& b,
                                    const Schema& schema, const AttributionConfig& config);

struct ReportConfig {
  std::size_t top_k = 3;
  double weak_threshold = 0.6;
  MaskConfig mask;
  AttributionConfig attribution;
};

struct ReportRow {
  std::string member;
  std::string partner;  // the representative
  double proxy_probability = 0.0;
  double pme_total = 0.0;
  AttributeScores top_attributes;
  Attribution attribution;
  bool weak_link = false;
  bool glue_record = false;
  bool anonymous_match_suspect = false;
};

struct ExplanationReport {
  std::string entity_id;
  std::string representative;
  std::vector<ReportRow> rows;

  nlohmann::json to_json() const;
  std::string to_csv(const Schema& schema) const;
};

// Members whose removal disconnects the graph over `members` formed by the
// given edges (articulation points).
std::vector<std::string> articulation_points(const std::vector<std::string>& members,
                                             const std::vector<RecordPair>& edges);

// Match edges inside `entity` after unlink rules are applied.
std::vector<RecordPair> entity_match_edges(const Entity& entity,
                                           const std::vector<PairScore>& pair_scores,
                                           const std::vector<UnlinkRule>& rules);

ExplanationReport build_explanation_report(const Entity& entity, const RecordSet& records,
                                           const std::vector<PairScore>& pair_scores,
                                           const std::vector<UnlinkRule>& rules,
                                           const GcnParams& params, const EntityGraph& graph,
                                           const MatcherConfig& matcher,
                                           const ReportConfig& config);

}  // namespace xem
