#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/matcher.hpp"
#include "xem/records.hpp"

namespace xem {

// Union by size with path halving over dense indices.
class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n);

  std::size_t find(std::size_t x);
  // Returns false when x and y were already joined.
  bool unite(std::size_t x, std::size_t y);
  std::size_t size_of(std::size_t x) { return size_[find(x)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct UnlinkRule {
  RecordPair pair;
  std::string created_at;  // ISO-8601 UTC
  std::string author;

  bool operator==(const UnlinkRule&) const = default;
};

struct Entity {
  std::string entity_id;             // smallest member id
  std::vector<std::string> members;  // sorted
  std::string representative;
  std::vector<std::pair<std::string, std::string>> edges;  // (member, representative)

  std::size_t size() const { return members.size(); }
  bool operator==(const Entity&) const = default;
};

class Partition {
 public:
  Partition() = default;
  Partition(std::vector<Entity> entities, std::vector<RecordPair> non_separating);

  const std::vector<Entity>& entities() const { return entities_; }
  // Unlink rules whose endpoints remain connected through other edges.
  const std::vector<RecordPair>& non_separating_rules() const { return non_separating_; }

  const Entity* entity_of(std::string_view record_id) const;
  const Entity* find(std::string_view entity_id) const;
  std::size_t record_count() const { return record_index_.size(); }

  nlohmann::json to_json() const;
  static Partition from_json(const nlohmann::json& doc);

  bool operator==(const Partition& other) const {
    return entities_ == other.entities_ && non_separating_ == other.non_separating_;
  }

 private:
  std::vector<Entity> entities_;
  std::vector<RecordPair> non_separating_;
  std::unordered_map<std::string, std::size_t> record_index_;
  std::unordered_map<std::string, std::size_t> entity_index_;
};

using RepresentativePicker = std::function<std::string(const std::vector<std::string>& members)>;

// Most non-missing, non-anonymous attributes; ties go to the smallest id.
std::string select_representative(const std::vector<std::string>& members,
                                   const RecordSet& records, const AnonymousValueList& anon);

RepresentativePicker completeness_picker(const RecordSet& records, const AnonymousValueList& anon);

// Connected components over Match pairs minus unlinked pairs. Without a
// picker the representative is the entity id.
Partition link(const std::vector<PairScore>& pairs, const std::vector<UnlinkRule>& rules,
               const std::vector<std::string>& all_ids, const RepresentativePicker& pick = {});

std::map<std::size_t, std::size_t> entity_size_histogram(const Partition& partition);

nlohmann::json unlink_rule_to_json(const UnlinkRule& rule);
UnlinkRule unlink_rule_from_json(const nlohmann::json& obj);
std::vector<UnlinkRule> read_unlink_log(std::string_view jsonl);

}  // namespace xem
