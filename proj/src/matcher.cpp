#include "xem/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "xem/error.hpp"
#include "xem/json_util.hpp"

namespace xem {

using nlohmann::json;

namespace {

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if (c >= 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    if (i + len > s.size()) len = 1, cp = c;  // truncated sequence: keep raw byte
    for (std::size_t k = 1; k < len; ++k) {
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::set<std::string_view> tokens(std::string_view s) {
  std::set<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.insert(s.substr(i, j - i));
    i = j;
  }
  return out;
}

KeyTransform parse_transform(std::string_view name) {
  if (name == "exact") return KeyTransform::kExact;
  if (name == "prefix") return KeyTransform::kPrefix;
  if (name == "digits") return KeyTransform::kDigits;
  if (name == "first_token") return KeyTransform::kFirstToken;
  throw Error(ErrorCode::kConfig, "unknown blocking transform \"" + std::string(name) + "\"");
}

std::string_view transform_name(KeyTransform t) {
  switch (t) {
    case KeyTransform::kExact: return "exact";
    case KeyTransform::kPrefix: return "prefix";
    case KeyTransform::kDigits: return "digits";
    case KeyTransform::kFirstToken: return "first_token";
  }
  return "exact";
}

}  // namespace

RecordPair canonical_pair(std::string_view x, std::string_view y) {
  if (x == y) {
    throw Error(ErrorCode::kPrecondition, "a pair needs two distinct records, got \"" +
                                              std::string(x) + "\" twice");
  }
  if (y < x) std::swap(x, y);
  return {std::string(x), std::string(y)};
}

double AttributeWeights::agree_weight() const { return std::log2(m / u); }
double AttributeWeights::disagree_weight() const { return std::log2((1.0 - m) / (1.0 - u)); }

void WeightTable::set(const std::string& attribute, double m, double u) {
  if (!(m > 0.0 && m < 1.0 && u > 0.0 && u < 1.0)) {
    throw Error(ErrorCode::kConfig, "weights for \"" + attribute + "\" must lie in (0,1)");
  }
  if (!(m > u)) {
    throw Error(ErrorCode::kConfig,
                "weights for \"" + attribute + "\" need m > u (agreement must be evidence)");
  }
  entries_[attribute] = {m, u};
}

const AttributeWeights* WeightTable::find(std::string_view attribute) const {
  auto it = entries_.find(attribute);
  return it == entries_.end() ? nullptr : &it->second;
}

json WeightTable::to_json() const {
  json out = json::object();
  for (const auto& [name, w] : entries_) out[name] = {{"m", w.m}, {"u", w.u}};
  return out;
}

WeightTable WeightTable::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "matcher.weights must be an object");
  WeightTable table;
  for (const auto& [name, w] : doc.items()) {
    const std::string ctx = "matcher.weights." + name;
    require_known_keys(w, {"m", "u"}, ctx);
    if (!w.contains("m") || !w.contains("u")) {
      throw Error(ErrorCode::kConfig, ctx + " needs both m and u");
    }
    table.set(name, read_number<double>(w, "m", 0, ctx), read_number<double>(w, "u", 0, ctx));
  }
  return table;
}

std::string_view match_class_name(MatchClass c) {
  switch (c) {
    case MatchClass::kMatch: return "Match";
    case MatchClass::kClerical: return "Clerical";
    case MatchClass::kNonMatch: return "NonMatch";
  }
  return "NonMatch";
}

MatchClass parse_match_class(std::string_view name) {
  if (name == "Match") return MatchClass::kMatch;
  if (name == "Clerical") return MatchClass::kClerical;
  if (name == "NonMatch") return MatchClass::kNonMatch;
  throw Error(ErrorCode::kParse, "unknown match class \"" + std::string(name) + "\"");
}

void Thresholds::validate() const {
  if (!std::isfinite(autolink) || !std::isfinite(clerical) || autolink < clerical) {
    throw Error(ErrorCode::kConfig, "thresholds need finite autolink >= clerical");
  }
}

double PairScore::contribution(std::string_view attribute) const {
  for (const auto& [name, c] : contributions) {
    if (name == attribute) return c;
  }
  return 0.0;
}

std::string BlockingKey::describe() const {
  std::string out = attribute + ":" + std::string(transform_name(transform));
  if (transform == KeyTransform::kPrefix) out += std::to_string(length);
  return out;
}

void BlockingConfig::validate(const Schema& schema) const {
  if (keys.empty()) throw Error(ErrorCode::kConfig, "blocking needs at least one key");
  if (max_block_size < 2) throw Error(ErrorCode::kConfig, "max_block_size must be >= 2");
  for (const auto& k : keys) {
    if (!schema.index_of(k.attribute)) {
      throw Error(ErrorCode::kConfig,
                  "blocking key attribute \"" + k.attribute + "\" is not in the schema");
    }
    if (k.transform == KeyTransform::kPrefix && k.length == 0) {
      throw Error(ErrorCode::kConfig, "prefix blocking key needs length >= 1");
    }
  }
}

json BlockingConfig::to_json() const {
  json ks = json::array();
  for (const auto& k : keys) {
    json o = {{"attribute", k.attribute}, {"transform", transform_name(k.transform)}};
    if (k.transform == KeyTransform::kPrefix) o["length"] = k.length;
    ks.push_back(o);
  }
  return {{"keys", ks}, {"max_block_size", max_block_size}};
}

BlockingConfig BlockingConfig::from_json(const json& doc) {
  require_known_keys(doc, {"keys", "max_block_size"}, "matcher.blocking");
  BlockingConfig cfg;
  cfg.max_block_size = read_number<std::size_t>(doc, "max_block_size", 500, "matcher.blocking");
  if (doc.contains("keys")) {
    if (!doc["keys"].is_array()) throw Error(ErrorCode::kConfig, "matcher.blocking.keys must be an array");
    for (const auto& k : doc["keys"]) {
      require_known_keys(k, {"attribute", "transform", "length"}, "matcher.blocking.keys[]");
      if (!k.contains("attribute") || !k["attribute"].is_string()) {
        throw Error(ErrorCode::kConfig, "blocking key needs a string attribute");
      }
      BlockingKey key;
      key.attribute = k["attribute"].get<std::string>();
      if (k.contains("transform")) {
        if (!k["transform"].is_string()) throw Error(ErrorCode::kConfig, "transform must be a string");
        key.transform = parse_transform(k["transform"].get<std::string>());
      }
      key.length = read_number<std::size_t>(k, "length", 4, "matcher.blocking.keys[]");
      cfg.keys.push_back(std::move(key));
    }
  }
  return cfg;
}

json MatcherConfig::to_json() const {
  return {{"weights", weights.to_json()},
          {"thresholds", {{"autolink", thresholds.autolink}, {"clerical", thresholds.clerical}}},
          {"blocking", blocking.to_json()},
          {"anonymous_values", anonymous.to_json()}};
}

MatcherConfig MatcherConfig::from_json(const json& doc) {
  require_known_keys(doc, {"weights", "thresholds", "blocking", "anonymous_values"}, "matcher");
  MatcherConfig cfg = default_matcher_config();
  if (doc.contains("weights")) cfg.weights = WeightTable::from_json(doc["weights"]);
  if (doc.contains("thresholds")) {
    const auto& t = doc["thresholds"];
    require_known_keys(t, {"autolink", "clerical"}, "matcher.thresholds");
    cfg.thresholds.autolink = read_number<double>(t, "autolink", cfg.thresholds.autolink, "matcher.thresholds");
    cfg.thresholds.clerical = read_number<double>(t, "clerical", cfg.thresholds.clerical, "matcher.thresholds");
  }
  cfg.thresholds.validate();
  if (doc.contains("blocking")) cfg.blocking = BlockingConfig::from_json(doc["blocking"]);
  if (doc.contains("anonymous_values")) {
    cfg.anonymous = AnonymousValueList::from_json(doc["anonymous_values"]);
  }
  return cfg;
}

MatcherConfig default_matcher_config() {
  MatcherConfig cfg;
  cfg.weights.set("name", 0.90, 0.01);
  cfg.weights.set("address_line", 0.90, 0.02);
  cfg.weights.set("city", 0.95, 0.10);
  cfg.weights.set("postal_code", 0.90, 0.05);
  cfg.weights.set("phone", 0.85, 0.001);
  cfg.weights.set("tax_id", 0.90, 0.0005);
  cfg.blocking.keys = {
      {"postal_code", KeyTransform::kExact, 4},
      {"name", KeyTransform::kPrefix, 4},
      {"phone", KeyTransform::kDigits, 4},
      {"tax_id", KeyTransform::kExact, 4},
  };
  return cfg;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto x = decode_utf8(a);
  const auto y = decode_utf8(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(decode_utf8(a).size(), decode_utf8(b).size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

double token_jaccard(std::string_view a, std::string_view b) {
  const auto ta = tokens(a);
  const auto tb = tokens(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t common = 0;
  for (auto t : ta) common += tb.count(t);
  return static_cast<double>(common) / static_cast<double>(ta.size() + tb.size() - common);
}

ComparatorResult compare_attribute(const std::optional<std::string>& a,
                                   const std::optional<std::string>& b, AttributeKind kind,
                                   const AnonymousValueList& anon) {
  if (!a || !b) return ComparatorResult::missing();
  if (is_anonymous(*a, kind, anon) || is_anonymous(*b, kind, anon)) {
    return ComparatorResult::suppressed();
  }
  switch (kind) {
    case AttributeKind::kName:
      return ComparatorResult::compared(levenshtein_similarity(*a, *b));
    case AttributeKind::kAddress:
    case AttributeKind::kFreeText:
      return ComparatorResult::compared(token_jaccard(*a, *b));
    case AttributeKind::kDob:
    case AttributeKind::kPhone:
      return ComparatorResult::compared(digits_only(*a) == digits_only(*b) ? 1.0 : 0.0);
    case AttributeKind::kIdentifier:
      return ComparatorResult::compared(*a == *b ? 1.0 : 0.0);
  }
  return ComparatorResult::missing();
}

ComparisonVector compare_records(const Record& a, const Record& b, const Schema& schema,
                                 const AnonymousValueList& anon) {
  ComparisonVector cv;
  cv.pair = canonical_pair(a.record_id, b.record_id);
  cv.results.reserve(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    cv.results.emplace_back(schema[i].name,
                            compare_attribute(a.values[i], b.values[i], schema[i].kind, anon));
  }
  return cv;
}

std::optional<std::string> blocking_key_value(const BlockingKey& key, const Record& record,
                                              const Schema& schema,
                                              const AnonymousValueList* anon) {
  const auto idx = schema.index_of(key.attribute);
  if (!idx || !record.values[*idx]) return std::nullopt;
  const std::string& value = *record.values[*idx];
  if (anon && is_anonymous(value, schema[*idx].kind, *anon)) return std::nullopt;
  std::string out;
  switch (key.transform) {
    case KeyTransform::kExact:
      out = value;
      break;
    case KeyTransform::kPrefix:
      out = value.substr(0, key.length);
      break;
    case KeyTransform::kDigits:
      out = digits_only(value);
      break;
    case KeyTransform::kFirstToken:
      out = value.substr(0, value.find(' '));
      break;
  }
  if (out.empty()) return std::nullopt;
  return out;
}

CandidateSet candidate_pairs(const RecordSet& records, const BlockingConfig& config,
                             const AnonymousValueList* anon) {
  config.validate(records.schema());
  CandidateSet result;
  std::vector<std::pair<std::size_t, std::size_t>> index_pairs;
  for (std::size_t k = 0; k < config.keys.size(); ++k) {
    std::unordered_map<std::string, std::vector<std::size_t>> blocks;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (auto v = blocking_key_value(config.keys[k], records[i], records.schema(), anon)) {
        blocks[*v].push_back(i);
      }
    }
    for (const auto& [value, members] : blocks) {
      if (members.size() < 2) continue;
      if (members.size() > config.max_block_size) {
        ++result.skipped_blocks;
        continue;
      }
      for (std::size_t x = 0; x < members.size(); ++x) {
        for (std::size_t y = x + 1; y < members.size(); ++y) {
          index_pairs.emplace_back(members[x], members[y]);
        }
      }
    }
  }
  std::sort(index_pairs.begin(), index_pairs.end());
  index_pairs.erase(std::unique(index_pairs.begin(), index_pairs.end()), index_pairs.end());
  result.pairs.reserve(index_pairs.size());
  for (const auto& [x, y] : index_pairs) {
    result.pairs.push_back(canonical_pair(records[x].record_id, records[y].record_id));
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

PairScore score_pair(const ComparisonVector& cv, const WeightTable& weights) {
  PairScore score;
  score.pair = cv.pair;
  score.contributions.reserve(cv.results.size());
  for (const auto& [name, result] : cv.results) {
    double c = 0.0;
    if (result.status == CompareStatus::kCompared) {
      const AttributeWeights* w = weights.find(name);
      if (!w) {
        throw Error(ErrorCode::kConfig, "no weights configured for attribute \"" + name + "\"");
      }
      const double agree = w->agree_weight();
      const double disagree = w->disagree_weight();
      c = disagree + result.similarity * (agree - disagree);
    }
    score.contributions.emplace_back(name, c);
    score.total += c;
  }
  return score;
}

MatchClass classify_total(double total, const Thresholds& thresholds) {
  if (total >= thresholds.autolink) return MatchClass::kMatch;
  if (total >= thresholds.clerical) return MatchClass::kClerical;
  return MatchClass::kNonMatch;
}

PairScore classify(PairScore score, const Thresholds& thresholds) {
  thresholds.validate();
  score.match_class = classify_total(score.total, thresholds);
  return score;
}

PairScore score_records(const Record& a, const Record& b, const Schema& schema,
                        const MatcherConfig& config) {
  return classify(score_pair(compare_records(a, b, schema, config.anonymous), config.weights),
                  config.thresholds);
}

MatchRun run_matching(const RecordSet& records, const MatcherConfig& config) {
  config.thresholds.validate();
  const CandidateSet candidates = candidate_pairs(records, config.blocking, &config.anonymous);
  MatchRun run;
  run.skipped_blocks = candidates.skipped_blocks;
  run.scores.reserve(candidates.pairs.size());
  for (const auto& p : candidates.pairs) {
    run.scores.push_back(score_records(records.at(p.a), records.at(p.b), records.schema(), config));
  }
  return run;
}

json pair_score_to_json(const PairScore& score) {
  // An array keeps the schema order through a round trip.
  json contrib = json::array();
  for (const auto& [name, c] : score.contributions) contrib.push_back({name, c});
  json out = {{"a", score.pair.a}, {"b", score.pair.b}, {"total", score.total}};
  out["class"] = score.match_class ? json(match_class_name(*score.match_class)) : json(nullptr);
  out["contrib"] = std::move(contrib);
  return out;
}

PairScore pair_score_from_json(const json& obj) {
  try {
    PairScore s;
    s.pair = canonical_pair(obj.at("a").get<std::string>(), obj.at("b").get<std::string>());
    if (s.pair.a != obj.at("a").get<std::string>()) {
      throw Error(ErrorCode::kParse, "pair is not in canonical order");
    }
    s.total = obj.at("total").get<double>();
    if (!obj.at("class").is_null()) s.match_class = parse_match_class(obj.at("class").get<std::string>());
    for (const auto& entry : obj.at("contrib")) {
      s.contributions.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed pair score: ") + e.what());
  }
}

std::string write_pair_scores(const std::vector<PairScore>& scores) {
  std::string out;
  for (const auto& s : scores) {
    out += pair_score_to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<PairScore> read_pair_scores(std::string_view jsonl) {
  std::vector<PairScore> out;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < jsonl.size();) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(pair_score_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParse,
                  "pairs line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace xem
