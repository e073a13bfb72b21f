#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "xem/records.hpp"
#include "xem/util.hpp"

namespace xem {

enum class CorruptionOp { kNone, kTypo, kTokenSwap, kTruncation, kMissing, kAnonymous };

struct CorruptionProbabilities {
  double typo = 0.0;
  double token_swap = 0.0;
  double truncation = 0.0;
  double missing = 0.0;
  double anonymous = 0.0;

  double total() const { return typo + token_swap + truncation + missing + anonymous; }
};

struct DuplicateDistribution {
  enum class Kind { kGeometric, kFixed } kind = Kind::kGeometric;
  double mean = 1.5;      // geometric: expected duplicates per entity
  std::size_t count = 0;  // fixed
};

struct GenConfig {
  std::size_t n_base_entities = 4200;
  DuplicateDistribution duplicates;
  // At most one op is drawn per attribute of each duplicate; the
  // probabilities of an attribute must sum to <= 1.
  std::map<std::string, CorruptionProbabilities> corruption;
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
  // Strict; the seed is supplied separately by the caller.
  static GenConfig from_json(const nlohmann::json& doc, std::uint64_t seed);
};

// The documented acceptance profile: >= 10,000 organization records.
GenConfig acceptance_profile(std::uint64_t seed = 42);

class GoldClusters {
 public:
  std::map<std::string, std::string>& mapping() { return mapping_; }
  const std::map<std::string, std::string>& mapping() const { return mapping_; }
  std::size_t size() const { return mapping_.size(); }

  nlohmann::json to_json() const;
  static GoldClusters from_json(const nlohmann::json& doc);

  bool operator==(const GoldClusters&) const = default;

 private:
  std::map<std::string, std::string> mapping_;  // record_id -> gold entity id
};

struct SyntheticData {
  RecordSet records;  // raw (unnormalized) values, sorted by record_id
  GoldClusters gold;
};

SyntheticData generate(const GenConfig& config);

// typo / token-swap / truncation expect a nonempty value. Token swap on a
// value without two distinct adjacent tokens falls back to a typo.
std::optional<std::string> corrupt(std::string_view value, CorruptionOp op, AttributeKind kind,
                                   CounterRng& rng);

}  // namespace xem
