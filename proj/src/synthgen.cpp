#include "xem/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <vector>

#include "xem/error.hpp"
#include "xem/json_util.hpp"

namespace xem {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 26> kSyllables = {
    "kor", "va", "nix", "zen", "tal", "mar", "lo", "qui", "dra", "pel", "sor", "ben", "tri",
    "gal", "ux", "rho", "mi", "den", "cas", "por", "vel", "ta", "lux", "fen", "ob", "ira"};

constexpr std::array<std::string_view, 24> kIndustries = {
    "Logistics",  "Holdings",   "Systems",    "Foods",     "Analytics", "Capital",
    "Motors",     "Pharma",     "Textiles",   "Energy",    "Labs",      "Consulting",
    "Media",      "Robotics",   "Bakery",     "Outfitters", "Builders", "Dental",
    "Freight",    "Insurance",  "Software",   "Trading",   "Partners",  "Studios"};

constexpr std::array<std::string_view, 8> kSuffixes = {"Inc", "LLC", "Ltd", "Corp",
                                                       "Co",  "Group", "GmbH", "PLC"};

constexpr std::array<std::string_view, 48> kStreets = {
    "Maple",    "Oak",      "Pine",     "Cedar",    "Elm",      "Willow",  "Birch",
    "Spruce",   "Lake",     "Hill",     "River",    "Park",     "Sunset",  "Highland",
    "Meadow",   "Forest",   "Church",   "Mill",     "Spring",   "Valley",  "Ridge",
    "Harbor",   "Bridge",   "Station",  "Market",   "Garden",   "Orchard", "Prospect",
    "Franklin", "Lincoln",  "Madison",  "Jefferson", "Washington", "Adams", "Jackson",
    "Monroe",   "Cherry",   "Walnut",   "Chestnut", "Aspen",    "Sycamore", "Magnolia",
    "Juniper",  "Laurel",   "Hawthorn", "Poplar",   "Beacon",   "Summit"};

constexpr std::array<std::string_view, 8> kStreetTypes = {"St", "Ave", "Rd", "Blvd",
                                                          "Ln", "Dr", "Way", "Ct"};

constexpr std::array<std::string_view, 40> kCities = {
    "Springfield", "Riverton",    "Fairview",   "Greenville", "Bristol",    "Clinton",
    "Georgetown",  "Salem",       "Madison",    "Ashland",    "Oxford",     "Dover",
    "Burlington",  "Milton",      "Newport",    "Franklin",   "Lexington",  "Arlington",
    "Kingston",    "Manchester",  "Clayton",    "Dayton",     "Hudson",     "Marion",
    "Jackson",     "Auburn",      "Chester",    "Lebanon",    "Winchester", "Camden",
    "San Marco",   "Lake Placid", "Port Hope",  "Glen Park",  "New Haven",  "Mount Vernon",
    "Cedar Falls", "Rock Hill",   "Bay City",   "Palm Grove"};

constexpr std::array<std::string_view, 4> kSources = {"crm", "erp", "web", "partner"};

constexpr std::size_t kPostalPerCity = 10;

template <typename Array>
std::string_view pick(const Array& items, CounterRng& rng) {
  return items[rng.below(items.size())];
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string digits(CounterRng& rng, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>('0' + rng.below(10)));
  return out;
}

// Base values in organization_schema() order.
std::vector<std::optional<std::string>> base_values(CounterRng& rng) {
  std::string core;
  const std::size_t n_syll = 2 + rng.below(2);
  for (std::size_t i = 0; i < n_syll; ++i) core += pick(kSyllables, rng);
  std::string name = capitalize(core) + " " + std::string(pick(kIndustries, rng)) + " " +
                     std::string(pick(kSuffixes, rng));

  std::string address = std::to_string(1 + rng.below(9999)) + " " +
                        std::string(pick(kStreets, rng)) + " " +
                        std::string(pick(kStreetTypes, rng));

  const std::size_t city = rng.below(kCities.size());
  const std::size_t postal =
      10000 + city * 1711 + rng.below(kPostalPerCity) * 37;  // 5 digits, disjoint per city
  std::string phone = std::to_string(200 + city * 7) + "-" + digits(rng, 3) + "-" + digits(rng, 4);
  std::string tax = std::to_string(10 + rng.below(89)) + "-" + digits(rng, 7);

  return {std::move(name),   std::move(address), std::string(kCities[city]),
          std::to_string(postal), std::move(phone), std::move(tax)};
}

CorruptionOp draw_op(const CorruptionProbabilities& p, CounterRng& rng) {
  double u = rng.uniform();
  const std::array<std::pair<double, CorruptionOp>, 5> ops = {{
      {p.typo, CorruptionOp::kTypo},
      {p.token_swap, CorruptionOp::kTokenSwap},
      {p.truncation, CorruptionOp::kTruncation},
      {p.missing, CorruptionOp::kMissing},
      {p.anonymous, CorruptionOp::kAnonymous},
  }};
  for (const auto& [prob, op] : ops) {
    if (u < prob) return op;
    u -= prob;
  }
  return CorruptionOp::kNone;
}

std::string typo(std::string_view value, CounterRng& rng) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isspace(static_cast<unsigned char>(value[i]))) positions.push_back(i);
  }
  if (positions.empty()) return std::string(value) + "x";
  const std::size_t at = positions[rng.below(positions.size())];
  std::string out(value);
  const auto original = static_cast<unsigned char>(out[at]);
  if (std::isdigit(original)) {
    out[at] = static_cast<char>('0' + (original - '0' + 1 + rng.below(9)) % 10);
  } else {
    // A different letter even after case folding.
    const int base = std::tolower(original) - 'a';
    const int shift = 1 + static_cast<int>(rng.below(25));
    const int letter = (base >= 0 && base < 26) ? (base + shift) % 26 : shift;
    out[at] = static_cast<char>((std::isupper(original) ? 'A' : 'a') + letter);
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view value) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < value.size()) {
    while (i < value.size() && value[i] == ' ') ++i;
    std::size_t j = i;
    while (j < value.size() && value[j] != ' ') ++j;
    if (j > i) out.emplace_back(value.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string anonymous_placeholder(AttributeKind kind, CounterRng& rng) {
  const auto& values = default_anonymous_values().values(kind);
  auto it = values.begin();
  std::advance(it, static_cast<long>(rng.below(values.size())));
  std::string out = *it;
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

void GenConfig::validate() const {
  if (duplicates.kind == DuplicateDistribution::Kind::kGeometric &&
      !(duplicates.mean >= 0.0 && std::isfinite(duplicates.mean))) {
    throw Error(ErrorCode::kConfig, "duplicate mean must be finite and >= 0");
  }
  for (const auto& [attr, p] : corruption) {
    for (double v : {p.typo, p.token_swap, p.truncation, p.missing, p.anonymous}) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::kConfig, "corruption probabilities for " + attr + " must be in [0,1]");
      }
    }
    if (p.total() > 1.0 + 1e-12) {
      throw Error(ErrorCode::kConfig, "corruption probabilities for " + attr + " sum above 1");
    }
    if (!organization_schema().index_of(attr)) {
      throw Error(ErrorCode::kConfig, "corruption profile names unknown attribute " + attr);
    }
  }
}

json GenConfig::to_json() const {
  json dup = duplicates.kind == DuplicateDistribution::Kind::kGeometric
                 ? json{{"distribution", "geometric"}, {"mean", duplicates.mean}}
                 : json{{"distribution", "fixed"}, {"count", duplicates.count}};
  json corr = json::object();
  for (const auto& [attr, p] : corruption) {
    corr[attr] = {{"typo", p.typo},       {"token_swap", p.token_swap},
                  {"truncation", p.truncation}, {"missing", p.missing},
                  {"anonymous", p.anonymous}};
  }
  return {{"n_base_entities", n_base_entities}, {"duplicates", dup}, {"corruption", corr}};
}

GenConfig GenConfig::from_json(const json& doc, std::uint64_t seed) {
  require_known_keys(doc, {"n_base_entities", "duplicates", "corruption"}, "generator");
  GenConfig cfg = acceptance_profile(seed);
  cfg.n_base_entities =
      read_number<std::size_t>(doc, "n_base_entities", cfg.n_base_entities, "generator");
  if (doc.contains("duplicates")) {
    const auto& d = doc["duplicates"];
    require_known_keys(d, {"distribution", "mean", "count"}, "generator.duplicates");
    const std::string kind = d.value("distribution", "geometric");
    if (kind == "geometric") {
      cfg.duplicates = {DuplicateDistribution::Kind::kGeometric,
                        read_number<double>(d, "mean", 1.5, "generator.duplicates"), 0};
    } else if (kind == "fixed") {
      cfg.duplicates = {DuplicateDistribution::Kind::kFixed, 0.0,
                        read_number<std::size_t>(d, "count", 0, "generator.duplicates")};
    } else {
      throw Error(ErrorCode::kConfig, "unknown duplicate distribution \"" + kind + "\"");
    }
  }
  if (doc.contains("corruption")) {
    const auto& c = doc["corruption"];
    require_known_keys(c, {"name", "address_line", "city", "postal_code", "phone", "tax_id"},
                       "generator.corruption");
    for (const auto& [attr, p] : c.items()) {
      const std::string ctx = "generator.corruption." + attr;
      require_known_keys(p, {"typo", "token_swap", "truncation", "missing", "anonymous"}, ctx);
      cfg.corruption[attr] = {read_number<double>(p, "typo", 0, ctx),
                              read_number<double>(p, "token_swap", 0, ctx),
                              read_number<double>(p, "truncation", 0, ctx),
                              read_number<double>(p, "missing", 0, ctx),
                              read_number<double>(p, "anonymous", 0, ctx)};
    }
  }
  cfg.validate();
  return cfg;
}

GenConfig acceptance_profile(std::uint64_t seed) {
  GenConfig cfg;
  cfg.n_base_entities = 4200;
  cfg.duplicates = {DuplicateDistribution::Kind::kGeometric, 1.5, 0};
  cfg.seed = seed;
  cfg.corruption = {
      {"name", {0.25, 0.10, 0.05, 0.02, 0.02}},
      {"address_line", {0.20, 0.10, 0.05, 0.05, 0.02}},
      {"city", {0.10, 0.00, 0.00, 0.05, 0.00}},
      {"postal_code", {0.05, 0.00, 0.00, 0.05, 0.00}},
      {"phone", {0.10, 0.00, 0.00, 0.15, 0.08}},
      {"tax_id", {0.05, 0.00, 0.00, 0.20, 0.05}},
  };
  return cfg;
}

json GoldClusters::to_json() const { return {{"clusters", mapping_}}; }

GoldClusters GoldClusters::from_json(const json& doc) {
  try {
    GoldClusters g;
    g.mapping_ = doc.at("clusters").get<std::map<std::string, std::string>>();
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed gold clusters: ") + e.what());
  }
}

std::optional<std::string> corrupt(std::string_view value, CorruptionOp op, AttributeKind kind,
                                   CounterRng& rng) {
  switch (op) {
    case CorruptionOp::kNone:
      return std::string(value);
    case CorruptionOp::kMissing:
      return std::nullopt;
    case CorruptionOp::kAnonymous:
      return anonymous_placeholder(kind, rng);
    case CorruptionOp::kTypo:
      return typo(value, rng);
    case CorruptionOp::kTruncation: {
      const std::size_t drop = (value.size() * 2 + 9) / 10;  // ceil(20%)
      std::string out(value.substr(0, value.size() - drop));
      if (out.find_first_not_of(' ') == std::string::npos) return std::nullopt;
      return out;
    }
    case CorruptionOp::kTokenSwap: {
      auto toks = split_tokens(value);
      std::vector<std::size_t> swappable;
      for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        if (toks[i] != toks[i + 1]) swappable.push_back(i);
      }
      if (swappable.empty()) return typo(value, rng);
      const std::size_t i = swappable[rng.below(swappable.size())];
      std::swap(toks[i], toks[i + 1]);
      std::string out;
      for (const auto& t : toks) {
        if (!out.empty()) out.push_back(' ');
        out += t;
      }
      return out;
    }
  }
  return std::string(value);
}

SyntheticData generate(const GenConfig& config) {
  config.validate();
  const Schema schema = organization_schema();

  struct Draft {
    std::uint64_t order_key;
    std::size_t entity;
    Record record;
  };
  std::vector<Draft> drafts;

  for (std::size_t e = 0; e < config.n_base_entities; ++e) {
    CounterRng base_rng(config.seed, e, 0);
    const auto base = base_values(base_rng);

    CounterRng count_rng(config.seed, e, 1);
    std::size_t n_dup = config.duplicates.count;
    if (config.duplicates.kind == DuplicateDistribution::Kind::kGeometric) {
      const double q = config.duplicates.mean / (1.0 + config.duplicates.mean);
      n_dup = 0;
      while (n_dup < 64 && count_rng.bernoulli(q)) ++n_dup;
    }

    for (std::size_t k = 0; k <= n_dup; ++k) {
      CounterRng rng(config.seed, e, 2 + k);
      Record r;
      r.source_id = std::string(pick(kSources, rng));
      r.values = base;
      if (k > 0) {
        for (std::size_t a = 0; a < schema.size(); ++a) {
          auto it = config.corruption.find(schema[a].name);
          if (it == config.corruption.end() || !r.values[a]) continue;
          const CorruptionOp op = draw_op(it->second, rng);
          r.values[a] = corrupt(*r.values[a], op, schema[a].kind, rng);
        }
      }
      drafts.push_back({splitmix64(config.seed ^ splitmix64((e << 8) ^ k)), e, std::move(r)});
    }
  }

  // Ids follow a seeded shuffle so they carry no cluster information.
  std::sort(drafts.begin(), drafts.end(), [](const Draft& x, const Draft& y) {
    return x.order_key != y.order_key ? x.order_key < y.order_key : x.entity < y.entity;
  });
  const std::size_t width = std::max<std::size_t>(6, std::to_string(drafts.size()).size());
  SyntheticData out;
  std::vector<Record> records;
  records.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    std::string num = std::to_string(i + 1);
    Record r = std::move(drafts[i].record);
    r.record_id = "r" + std::string(width - num.size(), '0') + num;
    std::string gid = std::to_string(drafts[i].entity);
    out.gold.mapping()[r.record_id] = "g" + std::string(gid.size() < 6 ? 6 - gid.size() : 0, '0') + gid;
    records.push_back(std::move(r));
  }
  out.records = RecordSet(schema, std::move(records));
  return out;
}

}  // namespace xem
