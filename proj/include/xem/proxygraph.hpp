#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/linker.hpp"
#include "xem/matcher.hpp"
#include "xem/records.hpp"

namespace xem {

enum class Encoding { kNgram, kExact };

struct CodecBlock {
  std::string attribute;
  AttributeKind kind;
  Encoding encoding;
  std::size_t offset;  // first dimension of the bucket block
  std::size_t width;   // number of buckets
};

// What one feature dimension means.
struct FeatureSlot {
  std::size_t attribute;  // schema position
  bool presence;          // presence bit rather than a bucket
  std::size_t bucket;
};

// Binary hashed features. Layout: one bucket block per attribute in schema
// order, followed by one presence bit per attribute.
class FeatureCodec {
 public:
  FeatureCodec() = default;
  explicit FeatureCodec(const Schema& schema, std::size_t ngram_buckets = 64,
                        std::size_t exact_buckets = 16);

  std::size_t dimension() const { return dimension_; }
  const std::vector<CodecBlock>& blocks() const { return blocks_; }
  std::size_t presence_offset() const { return presence_offset_; }
  std::size_t attribute_count() const { return blocks_.size(); }

  FeatureSlot slot(std::size_t dim) const;
  // Bucket block plus the presence bit.
  std::vector<std::size_t> attribute_dims(std::size_t attribute) const;
  std::string fingerprint() const;

  nlohmann::json to_json() const;
  static FeatureCodec from_json(const nlohmann::json& doc);

  bool operator==(const FeatureCodec& other) const { return to_json() == other.to_json(); }

 private:
  std::vector<CodecBlock> blocks_;
  std::size_t presence_offset_ = 0;
  std::size_t dimension_ = 0;
};

using SparseFeatures = std::vector<std::uint32_t>;  // sorted active dims

std::vector<std::string> char_trigrams(std::string_view value);

// Expects a normalized record. Anonymous values (when a list is given) are
// encoded as absent.
SparseFeatures encode(const Record& record, const FeatureCodec& codec,
                      const AnonymousValueList* anon = nullptr);
std::vector<double> encode_dense(const Record& record, const FeatureCodec& codec,
                                 const AnonymousValueList* anon = nullptr);

// Symmetric normalized adjacency with self loops, compressed rows.
struct NormalizedAdjacency {
  std::vector<std::size_t> row_start;  // size N + 1
  std::vector<std::size_t> column;
  std::vector<double> value;

  std::size_t rows() const { return row_start.empty() ? 0 : row_start.size() - 1; }
  double at(std::size_t i, std::size_t j) const;
};

class EntityGraph {
 public:
  EntityGraph() = default;
  EntityGraph(FeatureCodec codec, std::vector<std::string> node_ids,
              std::vector<SparseFeatures> features,
              std::vector<std::pair<std::size_t, std::size_t>> edges);

  const FeatureCodec& codec() const { return codec_; }
  std::size_t node_count() const { return node_ids_.size(); }
  std::size_t dimension() const { return codec_.dimension(); }
  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const std::vector<SparseFeatures>& features() const { return features_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  const NormalizedAdjacency& adjacency() const { return adjacency_; }

  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }
  // Throws kLookup.
  std::size_t index_of(std::string_view id) const;

  nlohmann::json to_json() const;
  static EntityGraph from_json(const nlohmann::json& doc);
  std::string fingerprint() const;

 private:
  FeatureCodec codec_;
  std::vector<std::string> node_ids_;
  std::vector<SparseFeatures> features_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  NormalizedAdjacency adjacency_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Nodes follow the record order; edges join each member to its representative.
EntityGraph build_graph(const Partition& partition, const RecordSet& records,
                        const FeatureCodec& codec, const AnonymousValueList* anon = nullptr);

enum class PairSource { kPmeMatch, kPmeNonMatch, kSampledNegative };

std::string_view pair_source_name(PairSource s);

struct TrainingPair {
  std::string u;
  std::string v;
  int label = 0;  // 1 = Match, 0 = NonMatch
  PairSource source = PairSource::kPmeMatch;

  bool operator==(const TrainingPair&) const = default;
};

// Positives are all Match pairs. Negatives are considered NonMatch pairs,
// subsampled or topped up with non-candidate pairs to neg_ratio * |pos|.
// Clerical pairs are left out.
std::vector<TrainingPair> make_training_set(const std::vector<PairScore>& scores,
                                            const std::vector<std::string>& all_ids,
                                            double neg_ratio, std::uint64_t seed);

struct TrainingSplit {
  std::vector<TrainingPair> train;
  std::vector<TrainingPair> heldout;
};

TrainingSplit split_training_set(const std::vector<TrainingPair>& pairs, double heldout_fraction,
                                 std::uint64_t seed);

}  // namespace xem
