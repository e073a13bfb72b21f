#include "xem/proxygraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "xem/error.hpp"
#include "xem/util.hpp"

namespace xem {

using nlohmann::json;

namespace {

Encoding encoding_for(AttributeKind kind) {
  switch (kind) {
    case AttributeKind::kName:
    case AttributeKind::kAddress:
    case AttributeKind::kFreeText:
      return Encoding::kNgram;
    case AttributeKind::kDob:
    case AttributeKind::kIdentifier:
    case AttributeKind::kPhone:
      return Encoding::kExact;
  }
  return Encoding::kNgram;
}

NormalizedAdjacency normalize_adjacency(std::size_t n,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::set<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) nbrs[i].insert(i);
  for (const auto& [x, y] : edges) {
    nbrs[x].insert(y);
    nbrs[y].insert(x);
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(nbrs[i].size()));
  }
  NormalizedAdjacency adj;
  adj.row_start.reserve(n + 1);
  adj.row_start.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nbrs[i]) {
      adj.column.push_back(j);
      adj.value.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    adj.row_start.push_back(adj.column.size());
  }
  return adj;
}

}  // namespace

FeatureCodec::FeatureCodec(const Schema& schema, std::size_t ngram_buckets,
                           std::size_t exact_buckets) {
  if (ngram_buckets == 0 || exact_buckets == 0) {
    throw Error(ErrorCode::kConfig, "codec bucket counts must be positive");
  }
  std::size_t offset = 0;
  for (const auto& a : schema.attributes()) {
    const Encoding enc = encoding_for(a.kind);
    const std::size_t width = enc == Encoding::kNgram ? ngram_buckets : exact_buckets;
    blocks_.push_back({a.name, a.kind, enc, offset, width});
    offset += width;
  }
  presence_offset_ = offset;
  dimension_ = offset + blocks_.size();
}

FeatureSlot FeatureCodec::slot(std::size_t dim) const {
  if (dim >= dimension_) throw Error(ErrorCode::kLookup, "feature dimension out of range");
  if (dim >= presence_offset_) return {dim - presence_offset_, true, 0};
  for (std::size_t a = 0; a < blocks_.size(); ++a) {
    if (dim < blocks_[a].offset + blocks_[a].width) return {a, false, dim - blocks_[a].offset};
  }
  throw Error(ErrorCode::kLookup, "feature dimension out of range");
}

std::vector<std::size_t> FeatureCodec::attribute_dims(std::size_t attribute) const {
  const CodecBlock& b = blocks_.at(attribute);
  std::vector<std::size_t> dims;
  dims.reserve(b.width + 1);
  for (std::size_t i = 0; i < b.width; ++i) dims.push_back(b.offset + i);
  dims.push_back(presence_offset_ + attribute);
  return dims;
}

std::string FeatureCodec::fingerprint() const { return xem::fingerprint(to_json().dump()); }

json FeatureCodec::to_json() const {
  json blocks = json::array();
  for (const auto& b : blocks_) {
    blocks.push_back({{"attribute", b.attribute},
                      {"kind", kind_name(b.kind)},
                      {"encoding", b.encoding == Encoding::kNgram ? "trigram_hash" : "exact_hash"},
                      {"offset", b.offset},
                      {"width", b.width}});
  }
  return {{"blocks", blocks}, {"presence_offset", presence_offset_}, {"dimension", dimension_}};
}

FeatureCodec FeatureCodec::from_json(const json& doc) {
  try {
    FeatureCodec c;
    for (const auto& b : doc.at("blocks")) {
      const std::string enc = b.at("encoding").get<std::string>();
      c.blocks_.push_back({b.at("attribute").get<std::string>(),
                           parse_kind(b.at("kind").get<std::string>()),
                           enc == "exact_hash" ? Encoding::kExact : Encoding::kNgram,
                           b.at("offset").get<std::size_t>(), b.at("width").get<std::size_t>()});
    }
    c.presence_offset_ = doc.at("presence_offset").get<std::size_t>();
    c.dimension_ = doc.at("dimension").get<std::size_t>();
    if (c.dimension_ != c.presence_offset_ + c.blocks_.size()) {
      throw Error(ErrorCode::kParse, "inconsistent codec dimension");
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed codec: ") + e.what());
  }
}

std::vector<std::string> char_trigrams(std::string_view value) {
  std::vector<std::string> grams;
  if (value.empty()) return grams;
  if (value.size() < 3) {
    grams.emplace_back(value);
    return grams;
  }
  for (std::size_t i = 0; i + 3 <= value.size(); ++i) grams.emplace_back(value.substr(i, 3));
  return grams;
}

SparseFeatures encode(const Record& record, const FeatureCodec& codec,
                      const AnonymousValueList* anon) {
  if (record.values.size() != codec.attribute_count()) {
    throw Error(ErrorCode::kShape, "record arity " + std::to_string(record.values.size()) +
                                       " does not match codec arity " +
                                       std::to_string(codec.attribute_count()));
  }
  SparseFeatures out;
  for (std::size_t a = 0; a < codec.attribute_count(); ++a) {
    const auto& value = record.values[a];
    const CodecBlock& b = codec.blocks()[a];
    if (!value || (anon && is_anonymous(*value, b.kind, *anon))) continue;
    if (b.encoding == Encoding::kNgram) {
      for (const auto& g : char_trigrams(*value)) {
        out.push_back(static_cast<std::uint32_t>(b.offset + fnv1a64(g) % b.width));
      }
    } else {
      const bool digit_form = b.kind == AttributeKind::kPhone || b.kind == AttributeKind::kDob;
      const std::string key = digit_form ? digits_only(*value) : *value;
      out.push_back(static_cast<std::uint32_t>(b.offset + fnv1a64(key) % b.width));
    }
    out.push_back(static_cast<std::uint32_t>(codec.presence_offset() + a));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> encode_dense(const Record& record, const FeatureCodec& codec,
                                 const AnonymousValueList* anon) {
  std::vector<double> dense(codec.dimension(), 0.0);
  for (auto d : encode(record, codec, anon)) dense[d] = 1.0;
  return dense;
}

double NormalizedAdjacency::at(std::size_t i, std::size_t j) const {
  for (std::size_t k = row_start[i]; k < row_start[i + 1]; ++k) {
    if (column[k] == j) return value[k];
  }
  return 0.0;
}

EntityGraph::EntityGraph(FeatureCodec codec, std::vector<std::string> node_ids,
                         std::vector<SparseFeatures> features,
                         std::vector<std::pair<std::size_t, std::size_t>> edges)
    : codec_(std::move(codec)),
      node_ids_(std::move(node_ids)),
      features_(std::move(features)),
      edges_(std::move(edges)) {
  if (features_.size() != node_ids_.size()) {
    throw Error(ErrorCode::kShape, "feature rows do not match node count");
  }
  for (std::size_t i = 0; i < node_ids_.size(); ++i) {
    if (!index_.emplace(node_ids_[i], i).second) {
      throw Error(ErrorCode::kUniqueness, "duplicate graph node \"" + node_ids_[i] + "\"");
    }
    for (auto d : features_[i]) {
      if (d >= codec_.dimension()) throw Error(ErrorCode::kShape, "feature index out of range");
    }
  }
  for (auto& [x, y] : edges_) {
    if (x >= node_ids_.size() || y >= node_ids_.size() || x == y) {
      throw Error(ErrorCode::kShape, "invalid graph edge");
    }
    if (y < x) std::swap(x, y);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  adjacency_ = normalize_adjacency(node_ids_.size(), edges_);
}

std::size_t EntityGraph::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) {
    throw Error(ErrorCode::kLookup, "record \"" + std::string(id) + "\" is not a graph node");
  }
  return it->second;
}

json EntityGraph::to_json() const {
  json nodes = json::array();
  for (std::size_t i = 0; i < node_ids_.size(); ++i) {
    nodes.push_back({{"id", node_ids_[i]}, {"features", features_[i]}});
  }
  json edges = json::array();
  for (const auto& [x, y] : edges_) edges.push_back({node_ids_[x], node_ids_[y]});
  return {{"codec", codec_.to_json()}, {"nodes", nodes}, {"edges", edges}};
}

EntityGraph EntityGraph::from_json(const json& doc) {
  try {
    FeatureCodec codec = FeatureCodec::from_json(doc.at("codec"));
    std::vector<std::string> ids;
    std::vector<SparseFeatures> features;
    std::unordered_map<std::string, std::size_t> pos;
    for (const auto& n : doc.at("nodes")) {
      pos.emplace(n.at("id").get<std::string>(), ids.size());
      ids.push_back(n.at("id").get<std::string>());
      features.push_back(n.at("features").get<SparseFeatures>());
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : doc.at("edges")) {
      edges.emplace_back(pos.at(e.at(0).get<std::string>()), pos.at(e.at(1).get<std::string>()));
    }
    return EntityGraph(std::move(codec), std::move(ids), std::move(features), std::move(edges));
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::kParse, "graph edge names an unknown node");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed graph: ") + e.what());
  }
}

std::string EntityGraph::fingerprint() const { return xem::fingerprint(to_json().dump()); }

EntityGraph build_graph(const Partition& partition, const RecordSet& records,
                        const FeatureCodec& codec, const AnonymousValueList* anon) {
  std::vector<std::string> ids = records.ids();
  std::vector<SparseFeatures> features;
  features.reserve(records.size());
  for (const auto& r : records.records()) features.push_back(encode(r, codec, anon));

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t covered = 0;
  for (const auto& entity : partition.entities()) {
    covered += entity.members.size();
    for (const auto& m : entity.members) {
      if (!records.position(m)) {
        throw Error(ErrorCode::kStaleness,
                    "partition member \"" + m + "\" is not in the record set");
      }
    }
    for (const auto& [member, rep] : entity.edges) {
      edges.emplace_back(*records.position(member), *records.position(rep));
    }
  }
  if (covered != records.size()) {
    throw Error(ErrorCode::kStaleness, "partition does not cover the record set");
  }
  return EntityGraph(codec, std::move(ids), std::move(features), std::move(edges));
}

std::string_view pair_source_name(PairSource s) {
  switch (s) {
    case PairSource::kPmeMatch: return "pme_match";
    case PairSource::kPmeNonMatch: return "pme_nonmatch";
    case PairSource::kSampledNegative: return "sampled_negative";
  }
  return "pme_match";
}

std::vector<TrainingPair> make_training_set(const std::vector<PairScore>& scores,
                                            const std::vector<std::string>& all_ids,
                                            double neg_ratio, std::uint64_t seed) {
  if (!(neg_ratio >= 0.0) || !std::isfinite(neg_ratio)) {
    throw Error(ErrorCode::kConfig, "neg_ratio must be finite and >= 0");
  }
  std::vector<TrainingPair> pos;
  std::vector<TrainingPair> considered;
  std::set<RecordPair> seen;
  for (const auto& s : scores) {
    seen.insert(s.pair);
    if (s.match_class == MatchClass::kMatch) {
      pos.push_back({s.pair.a, s.pair.b, 1, PairSource::kPmeMatch});
    } else if (s.match_class == MatchClass::kNonMatch) {
      considered.push_back({s.pair.a, s.pair.b, 0, PairSource::kPmeNonMatch});
    }
  }
  if (pos.empty()) {
    throw Error(ErrorCode::kTrainingSet, "no Match pairs to train on");
  }
  const auto target = static_cast<std::size_t>(std::llround(neg_ratio * static_cast<double>(pos.size())));

  CounterRng rng(seed, 0x70726f7879ULL);
  std::vector<TrainingPair> neg;
  if (considered.size() >= target) {
    // Partial Fisher-Yates; keeps a uniform subset.
    for (std::size_t i = 0; i < target; ++i) {
      const std::size_t j = i + rng.below(considered.size() - i);
      std::swap(considered[i], considered[j]);
    }
    considered.resize(target);
    neg = std::move(considered);
  } else {
    neg = std::move(considered);
    std::vector<std::string> ids = all_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const double universe = static_cast<double>(ids.size()) * (static_cast<double>(ids.size()) - 1) / 2;
    if (static_cast<double>(target) > universe - static_cast<double>(seen.size())) {
      throw Error(ErrorCode::kTrainingSet, "not enough distinct pairs to sample negatives");
    }
    while (neg.size() < target) {
      const std::size_t x = rng.below(ids.size());
      const std::size_t y = rng.below(ids.size());
      if (x == y) continue;
      RecordPair p = canonical_pair(ids[x], ids[y]);
      if (!seen.insert(p).second) continue;
      neg.push_back({p.a, p.b, 0, PairSource::kSampledNegative});
    }
  }

  std::vector<TrainingPair> out = std::move(pos);
  out.insert(out.end(), neg.begin(), neg.end());
  std::sort(out.begin(), out.end(), [](const TrainingPair& x, const TrainingPair& y) {
    return std::tie(x.u, x.v) < std::tie(y.u, y.v);
  });
  return out;
}

TrainingSplit split_training_set(const std::vector<TrainingPair>& pairs, double heldout_fraction,
                                 std::uint64_t seed) {
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "heldout fraction must be in [0,1)");
  }
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(seed, 0x73706c6974ULL);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_held = static_cast<std::size_t>(std::floor(heldout_fraction * static_cast<double>(pairs.size())));
  std::vector<bool> held(pairs.size(), false);
  for (std::size_t i = 0; i < n_held; ++i) held[order[i]] = true;
  TrainingSplit split;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    (held[i] ? split.heldout : split.train).push_back(pairs[i]);
  }
  return split;
}

}  // namespace xem
