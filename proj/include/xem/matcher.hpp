#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/records.hpp"

namespace xem {

// Unordered record pair in canonical form: a < b lexicographically.
struct RecordPair {
  std::string a;
  std::string b;

  auto operator<=>(const RecordPair&) const = default;
};

// Throws kPrecondition when x == y.
RecordPair canonical_pair(std::string_view x, std::string_view y);

enum class CompareStatus { kCompared, kMissingValue, kSuppressed };

struct ComparatorResult {
  double similarity = 0.0;  // meaningful only when status == kCompared
  CompareStatus status = CompareStatus::kMissingValue;

  static ComparatorResult compared(double s) { return {s, CompareStatus::kCompared}; }
  static ComparatorResult missing() { return {0.0, CompareStatus::kMissingValue}; }
  static ComparatorResult suppressed() { return {0.0, CompareStatus::kSuppressed}; }

  bool operator==(const ComparatorResult&) const = default;
};

struct AttributeWeights {
  double m = 0.0;
  double u = 0.0;

  double agree_weight() const;     // log2(m/u)
  double disagree_weight() const;  // log2((1-m)/(1-u))
};

class WeightTable {
 public:
  // Throws kConfig unless 0 < u < m < 1.
  void set(const std::string& attribute, double m, double u);
  const AttributeWeights* find(std::string_view attribute) const;
  const std::map<std::string, AttributeWeights, std::less<>>& entries() const { return entries_; }

  nlohmann::json to_json() const;
  static WeightTable from_json(const nlohmann::json& doc);

 private:
  std::map<std::string, AttributeWeights, std::less<>> entries_;
};

enum class MatchClass { kMatch, kClerical, kNonMatch };

std::string_view match_class_name(MatchClass c);
MatchClass parse_match_class(std::string_view name);

struct Thresholds {
  double autolink = 8.0;
  double clerical = 4.0;

  void validate() const;
};

struct ComparisonVector {
  RecordPair pair;
  std::vector<std::pair<std::string, ComparatorResult>> results;
};

struct PairScore {
  RecordPair pair;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> contributions;
  std::optional<MatchClass> match_class;

  double contribution(std::string_view attribute) const;
  bool operator==(const PairScore&) const = default;
};

enum class KeyTransform { kExact, kPrefix, kDigits, kFirstToken };

struct BlockingKey {
  std::string attribute;
  KeyTransform transform = KeyTransform::kExact;
  std::size_t length = 4;  // used by kPrefix

  std::string describe() const;
};

struct BlockingConfig {
  std::vector<BlockingKey> keys;
  std::size_t max_block_size = 500;

  void validate(const Schema& schema) const;
  nlohmann::json to_json() const;
  static BlockingConfig from_json(const nlohmann::json& doc);
};

struct MatcherConfig {
  WeightTable weights;
  Thresholds thresholds;
  BlockingConfig blocking;
  AnonymousValueList anonymous = default_anonymous_values();

  nlohmann::json to_json() const;
  // Strict: unknown keys are rejected. Missing sections keep defaults.
  static MatcherConfig from_json(const nlohmann::json& doc);
};

// Weights and blocking keys tuned for organization_schema().
MatcherConfig default_matcher_config();

std::size_t edit_distance(std::string_view a, std::string_view b);
double levenshtein_similarity(std::string_view a, std::string_view b);
double token_jaccard(std::string_view a, std::string_view b);

ComparatorResult compare_attribute(const std::optional<std::string>& a,
                                   const std::optional<std::string>& b, AttributeKind kind,
                                   const AnonymousValueList& anon);

ComparisonVector compare_records(const Record& a, const Record& b, const Schema& schema,
                                 const AnonymousValueList& anon);

// Normalized key value for one record, or nullopt when the attribute is
// absent or anonymous.
std::optional<std::string> blocking_key_value(const BlockingKey& key, const Record& record,
                                              const Schema& schema,
                                              const AnonymousValueList* anon = nullptr);

struct CandidateSet {
  std::vector<RecordPair> pairs;  // sorted, unique
  std::size_t skipped_blocks = 0;
};

CandidateSet candidate_pairs(const RecordSet& records, const BlockingConfig& config,
                             const AnonymousValueList* anon = nullptr);

// Throws kConfig when a compared attribute has no weights.
PairScore score_pair(const ComparisonVector& cv, const WeightTable& weights);
PairScore classify(PairScore score, const Thresholds& thresholds);
MatchClass classify_total(double total, const Thresholds& thresholds);

PairScore score_records(const Record& a, const Record& b, const Schema& schema,
                        const MatcherConfig& config);

struct MatchRun {
  std::vector<PairScore> scores;  // sorted by pair
  std::size_t skipped_blocks = 0;
};

MatchRun run_matching(const RecordSet& records, const MatcherConfig& config);

nlohmann::json pair_score_to_json(const PairScore& score);
PairScore pair_score_from_json(const nlohmann::json& obj);
std::string write_pair_scores(const std::vector<PairScore>& scores);
std::vector<PairScore> read_pair_scores(std::string_view jsonl);

}  // namespace xem
