#include "xem/linker.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "xem/error.hpp"

namespace xem {

using nlohmann::json;

DisjointSet::DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
  std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t DisjointSet::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool DisjointSet::unite(std::size_t x, std::size_t y) {
  x = find(x);
  y = find(y);
  if (x == y) return false;
  if (size_[x] < size_[y]) std::swap(x, y);
  parent_[y] = x;
  size_[x] += size_[y];
  return true;
}

Partition::Partition(std::vector<Entity> entities, std::vector<RecordPair> non_separating)
    : entities_(std::move(entities)), non_separating_(std::move(non_separating)) {
  std::sort(entities_.begin(), entities_.end(),
            [](const Entity& x, const Entity& y) { return x.entity_id < y.entity_id; });
  std::sort(non_separating_.begin(), non_separating_.end());
  for (std::size_t e = 0; e < entities_.size(); ++e) {
    const Entity& entity = entities_[e];
    if (entity.members.empty()) throw Error(ErrorCode::kPrecondition, "empty entity");
    entity_index_.emplace(entity.entity_id, e);
    for (const auto& m : entity.members) {
      if (!record_index_.emplace(m, e).second) {
        throw Error(ErrorCode::kPrecondition, "record \"" + m + "\" appears in two entities");
      }
    }
  }
}

const Entity* Partition::entity_of(std::string_view record_id) const {
  auto it = record_index_.find(std::string(record_id));
  return it == record_index_.end() ? nullptr : &entities_[it->second];
}

const Entity* Partition::find(std::string_view entity_id) const {
  auto it = entity_index_.find(std::string(entity_id));
  return it == entity_index_.end() ? nullptr : &entities_[it->second];
}

json Partition::to_json() const {
  json ents = json::array();
  for (const auto& e : entities_) {
    ents.push_back({{"id", e.entity_id}, {"representative", e.representative}, {"members", e.members}});
  }
  json ns = json::array();
  for (const auto& p : non_separating_) ns.push_back({p.a, p.b});
  return {{"entities", ents}, {"non_separating_unlinks", ns}};
}

Partition Partition::from_json(const json& doc) {
  try {
    std::vector<Entity> entities;
    for (const auto& e : doc.at("entities")) {
      Entity entity;
      entity.entity_id = e.at("id").get<std::string>();
      entity.representative = e.at("representative").get<std::string>();
      entity.members = e.at("members").get<std::vector<std::string>>();
      for (const auto& m : entity.members) {
        if (m != entity.representative) entity.edges.emplace_back(m, entity.representative);
      }
      entities.push_back(std::move(entity));
    }
    std::vector<RecordPair> ns;
    if (doc.contains("non_separating_unlinks")) {
      for (const auto& p : doc["non_separating_unlinks"]) {
        ns.push_back(canonical_pair(p.at(0).get<std::string>(), p.at(1).get<std::string>()));
      }
    }
    return Partition(std::move(entities), std::move(ns));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed partition: ") + e.what());
  }
}

std::string select_representative(const std::vector<std::string>& members,
                                   const RecordSet& records, const AnonymousValueList& anon) {
  if (members.empty()) throw Error(ErrorCode::kPrecondition, "entity has no members");
  const Schema& schema = records.schema();
  const std::string* best = nullptr;
  std::size_t best_filled = 0;
  for (const auto& id : members) {
    const Record& r = records.at(id);
    std::size_t filled = 0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (r.values[i] && !is_anonymous(*r.values[i], schema[i].kind, anon)) ++filled;
    }
    if (!best || filled > best_filled || (filled == best_filled && id < *best)) {
      best = &id;
      best_filled = filled;
    }
  }
  return *best;
}

RepresentativePicker completeness_picker(const RecordSet& records, const AnonymousValueList& anon) {
  return [&records, &anon](const std::vector<std::string>& members) {
    return select_representative(members, records, anon);
  };
}

Partition link(const std::vector<PairScore>& pairs, const std::vector<UnlinkRule>& rules,
               const std::vector<std::string>& all_ids, const RepresentativePicker& pick) {
  std::vector<std::string> ids = all_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::unordered_map<std::string, std::size_t> pos;
  pos.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
  auto index = [&](const std::string& id) {
    auto it = pos.find(id);
    if (it == pos.end()) throw Error(ErrorCode::kLookup, "pair names unknown record \"" + id + "\"");
    return it->second;
  };

  std::set<RecordPair> removed;
  for (const auto& r : rules) removed.insert(canonical_pair(r.pair.a, r.pair.b));

  DisjointSet ds(ids.size());
  std::set<RecordPair> match_edges;
  for (const auto& p : pairs) {
    if (p.match_class != MatchClass::kMatch) continue;
    const RecordPair canon = canonical_pair(p.pair.a, p.pair.b);
    match_edges.insert(canon);
    if (removed.contains(canon)) continue;
    ds.unite(index(canon.a), index(canon.b));
  }

  std::vector<RecordPair> non_separating;
  for (const auto& r : removed) {
    if (match_edges.contains(r) && ds.find(index(r.a)) == ds.find(index(r.b))) {
      non_separating.push_back(r);
    }
  }

  // ids are sorted, so the first member seen per root is the smallest.
  std::vector<std::vector<std::string>> groups;
  std::unordered_map<std::size_t, std::size_t> group_of_root;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t root = ds.find(i);
    auto [it, inserted] = group_of_root.emplace(root, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(ids[i]);
  }

  std::vector<Entity> entities;
  entities.reserve(groups.size());
  for (auto& members : groups) {
    Entity e;
    e.entity_id = members.front();
    e.representative = pick ? pick(members) : members.front();
    for (const auto& m : members) {
      if (m != e.representative) e.edges.emplace_back(m, e.representative);
    }
    e.members = std::move(members);
    entities.push_back(std::move(e));
  }
  return Partition(std::move(entities), std::move(non_separating));
}

std::map<std::size_t, std::size_t> entity_size_histogram(const Partition& partition) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& e : partition.entities()) ++hist[e.size()];
  return hist;
}

json unlink_rule_to_json(const UnlinkRule& rule) {
  return {{"a", rule.pair.a}, {"b", rule.pair.b}, {"created_at", rule.created_at},
          {"author", rule.author}};
}

UnlinkRule unlink_rule_from_json(const json& obj) {
  try {
    UnlinkRule r;
    r.pair = canonical_pair(obj.at("a").get<std::string>(), obj.at("b").get<std::string>());
    r.created_at = obj.value("created_at", "");
    r.author = obj.value("author", "");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed unlink rule: ") + e.what());
  }
}

std::vector<UnlinkRule> read_unlink_log(std::string_view jsonl) {
  std::vector<UnlinkRule> out;
  for (std::size_t start = 0; start < jsonl.size();) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(unlink_rule_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParse, std::string("malformed unlink log: ") + e.what());
    }
  }
  return out;
}

}  // namespace xem
