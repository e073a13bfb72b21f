#include "xem/records.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "xem/error.hpp"

namespace xem {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kAttributeKindCount> kKindNames = {
    "Name", "Address", "Dob", "Identifier", "Phone", "FreeText"};

constexpr std::string_view kIdColumn = "record_id";
constexpr std::string_view kSourceColumn = "source_id";

bool is_reserved_column(std::string_view name) {
  return name == kIdColumn || name == kSourceColumn;
}

// RFC 4180 fields for one logical row; quoted fields may span lines.
// Returns false at end of input.
struct CsvReader {
  std::string_view data;
  std::size_t pos = 0;
  std::size_t line = 1;

  bool next_row(std::vector<std::string>& fields, std::size_t& row_line,
                std::string& error) {
    fields.clear();
    error.clear();
    if (pos >= data.size()) return false;
    row_line = line;
    std::string field;
    bool quoted = false;
    bool after_quote = false;
    while (pos < data.size()) {
      const char c = data[pos++];
      if (quoted) {
        if (c == '"') {
          if (pos < data.size() && data[pos] == '"') {
            field.push_back('"');
            ++pos;
          } else {
            quoted = false;
            after_quote = true;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
        }
        continue;
      }
      if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        after_quote = false;
      } else if (c == '\r') {
        // tolerated before \n
      } else if (c == '\n') {
        ++line;
        fields.push_back(std::move(field));
        return true;
      } else if (c == '"' && field.empty() && !after_quote) {
        quoted = true;
      } else {
        if (after_quote && error.empty()) error = "characters after closing quote";
        field.push_back(c);
      }
    }
    if (quoted) error = "unterminated quoted field";
    fields.push_back(std::move(field));
    return true;
  }
};

std::string csv_escape(std::string_view value) {
  const bool needs_quotes =
      value.find_first_of(",\"\n\r") != std::string_view::npos ||
      (!value.empty() && (value.front() == ' ' || value.back() == ' '));
  if (!needs_quotes) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void check_duplicates(const std::vector<Record>& records) {
  std::map<std::string, std::size_t> seen;
  for (const auto& r : records) ++seen[r.record_id];
  std::vector<std::string> offenders;
  for (const auto& [id, n] : seen) {
    if (n > 1) offenders.push_back(id);
  }
  if (offenders.empty()) return;
  std::string msg = "duplicate record_id:";
  for (const auto& id : offenders) msg += " \"" + id + "\"";
  throw Error(ErrorCode::kUniqueness, msg);
}

ParsedRecords parse_csv(std::string_view bytes, const Schema& schema) {
  CsvReader reader{bytes};
  std::vector<std::string> header;
  std::size_t line = 0;
  std::string error;
  if (!reader.next_row(header, line, error) || !error.empty()) {
    throw Error(ErrorCode::kSchema, "missing or malformed csv header row");
  }
  if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF")) {
    header.front().erase(0, 3);
  }
  // column -> schema slot (-1 id, -2 source)
  std::vector<long> slots;
  std::set<std::string> seen;
  bool has_id = false;
  for (const auto& col : header) {
    if (!seen.insert(col).second) {
      throw Error(ErrorCode::kSchema, "duplicate csv column \"" + col + "\"");
    }
    if (col == kIdColumn) {
      slots.push_back(-1);
      has_id = true;
    } else if (col == kSourceColumn) {
      slots.push_back(-2);
    } else if (auto idx = schema.index_of(col)) {
      slots.push_back(static_cast<long>(*idx));
    } else {
      throw Error(ErrorCode::kSchema, "csv column \"" + col + "\" is not in the schema");
    }
  }
  if (!has_id) throw Error(ErrorCode::kSchema, "csv header lacks record_id column");

  std::vector<Record> records;
  std::vector<RowIssue> rejected;
  std::vector<std::string> fields;
  while (reader.next_row(fields, line, error)) {
    if (fields.size() == 1 && fields[0].empty() && error.empty()) continue;  // blank line
    if (!error.empty()) {
      rejected.push_back({line, error});
      continue;
    }
    if (fields.size() != header.size()) {
      rejected.push_back({line, "expected " + std::to_string(header.size()) +
                                    " fields, found " + std::to_string(fields.size())});
      continue;
    }
    Record r;
    r.values.resize(schema.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (slots[i] == -1) {
        r.record_id = fields[i];
      } else if (slots[i] == -2) {
        r.source_id = fields[i];
      } else if (!fields[i].empty()) {
        r.values[static_cast<std::size_t>(slots[i])] = fields[i];
      }
    }
    if (r.record_id.empty()) {
      rejected.push_back({line, "empty record_id"});
      continue;
    }
    records.push_back(std::move(r));
  }
  check_duplicates(records);
  return {RecordSet(schema, std::move(records)), std::move(rejected)};
}

ParsedRecords parse_jsonl(std::string_view bytes, const Schema& schema) {
  std::vector<Record> records;
  std::vector<RowIssue> rejected;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < bytes.size();) {
    std::size_t end = bytes.find('\n', start);
    if (end == std::string_view::npos) end = bytes.size();
    std::string_view line = bytes.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      rejected.push_back({line_no, std::string("invalid json: ") + e.what()});
      continue;
    }
    if (!obj.is_object()) {
      rejected.push_back({line_no, "row is not a json object"});
      continue;
    }
    Record r;
    r.values.resize(schema.size());
    std::string problem;
    for (const auto& [key, value] : obj.items()) {
      if (key == kIdColumn || key == kSourceColumn) {
        if (!value.is_string()) {
          problem = key + " must be a string";
          break;
        }
        (key == kIdColumn ? r.record_id : r.source_id) = value.get<std::string>();
        continue;
      }
      auto idx = schema.index_of(key);
      if (!idx) {
        problem = "attribute \"" + key + "\" is not in the schema";
        break;
      }
      if (value.is_null()) continue;
      if (value.is_string()) {
        r.values[*idx] = value.get<std::string>();
      } else if (value.is_number()) {
        r.values[*idx] = value.dump();
      } else {
        problem = "attribute \"" + key + "\" must be a string or null";
        break;
      }
    }
    if (problem.empty() && r.record_id.empty()) problem = "missing record_id";
    if (!problem.empty()) {
      rejected.push_back({line_no, problem});
      continue;
    }
    records.push_back(std::move(r));
  }
  check_duplicates(records);
  return {RecordSet(schema, std::move(records)), std::move(rejected)};
}

}  // namespace

std::string_view kind_name(AttributeKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

AttributeKind parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<AttributeKind>(i);
  }
  return AttributeKind::kFreeText;
}

Schema::Schema(std::vector<AttributeSpec> attributes) : attributes_(std::move(attributes)) {
  std::set<std::string> names;
  for (const auto& a : attributes_) {
    if (a.name.empty()) throw Error(ErrorCode::kSchema, "empty attribute name");
    if (is_reserved_column(a.name)) {
      throw Error(ErrorCode::kSchema, "attribute name \"" + a.name + "\" is reserved");
    }
    if (!names.insert(a.name).second) {
      throw Error(ErrorCode::kSchema, "duplicate attribute \"" + a.name + "\"");
    }
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i].name == name) return i;
  }
  return std::nullopt;
}

json Schema::to_json() const {
  json attrs = json::array();
  for (const auto& a : attributes_) {
    attrs.push_back({{"name", a.name}, {"kind", kind_name(a.kind)}});
  }
  return {{"attributes", attrs}};
}

Schema Schema::from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("attributes") || !doc["attributes"].is_array()) {
    throw Error(ErrorCode::kSchema, "schema descriptor must be {\"attributes\":[...]}");
  }
  std::vector<AttributeSpec> attrs;
  for (const auto& a : doc["attributes"]) {
    if (!a.is_object() || !a.contains("name") || !a["name"].is_string()) {
      throw Error(ErrorCode::kSchema, "schema attribute needs a string \"name\"");
    }
    AttributeKind kind = AttributeKind::kFreeText;
    if (a.contains("kind") && a["kind"].is_string()) {
      kind = parse_kind(a["kind"].get<std::string>());
    }
    attrs.push_back({a["name"].get<std::string>(), kind});
  }
  return Schema(std::move(attrs));
}

Schema organization_schema() {
  return Schema({{"name", AttributeKind::kName},
                 {"address_line", AttributeKind::kAddress},
                 {"city", AttributeKind::kFreeText},
                 {"postal_code", AttributeKind::kIdentifier},
                 {"phone", AttributeKind::kPhone},
                 {"tax_id", AttributeKind::kIdentifier}});
}

RecordSet::RecordSet(Schema schema, std::vector<Record> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  check_duplicates(records_);
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.record_id.empty()) throw Error(ErrorCode::kSchema, "empty record_id");
    if (r.values.size() != schema_.size()) {
      throw Error(ErrorCode::kSchema, "record \"" + r.record_id + "\" has " +
                                          std::to_string(r.values.size()) +
                                          " values for a schema of " +
                                          std::to_string(schema_.size()));
    }
    index_.emplace(r.record_id, i);
  }
}

std::optional<std::size_t> RecordSet::position(std::string_view record_id) const {
  auto it = index_.find(std::string(record_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Record& RecordSet::at(std::string_view record_id) const {
  auto pos = position(record_id);
  if (!pos) throw Error(ErrorCode::kLookup, "unknown record \"" + std::string(record_id) + "\"");
  return records_[*pos];
}

std::vector<std::string> RecordSet::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.record_id);
  return out;
}

void AnonymousValueList::add(AttributeKind kind, std::string value) {
  lists_[static_cast<std::size_t>(kind)].insert(std::move(value));
}

json AnonymousValueList::to_json() const {
  json out = json::object();
  for (std::size_t k = 0; k < kAttributeKindCount; ++k) {
    out[std::string(kKindNames[k])] = lists_[k];
  }
  return out;
}

AnonymousValueList AnonymousValueList::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "anonymous value list must be an object");
  AnonymousValueList list;
  for (const auto& [key, values] : doc.items()) {
    const auto it = std::find(kKindNames.begin(), kKindNames.end(), key);
    if (it == kKindNames.end()) {
      throw Error(ErrorCode::kConfig, "unknown attribute kind \"" + key + "\" in anonymous list");
    }
    if (!values.is_array()) {
      throw Error(ErrorCode::kConfig, "anonymous list for " + key + " must be an array");
    }
    const auto kind = static_cast<AttributeKind>(it - kKindNames.begin());
    for (const auto& v : values) {
      if (!v.is_string()) throw Error(ErrorCode::kConfig, "anonymous values must be strings");
      if (auto n = normalize_value(v.get<std::string>())) list.add(kind, *n);
    }
  }
  return list;
}

const AnonymousValueList& default_anonymous_values() {
  static const AnonymousValueList list = AnonymousValueList::from_json(json::parse(R"({
    "Name": ["unknown", "n/a", "na", "none", "null", "anonymous", "test", "not available"],
    "Address": ["unknown", "n/a", "na", "none", "null", "no address", "not available"],
    "Dob": ["19000101", "00000000", "99999999", "unknown", "n/a"],
    "Identifier": ["000000000", "999999999", "00-0000000", "99-9999999", "unknown", "n/a", "none"],
    "Phone": ["9999999999", "0000000000", "1234567890", "1111111111", "unknown", "n/a"],
    "FreeText": ["unknown", "n/a", "na", "none", "null"]
  })"));
  return list;
}

ParsedRecords parse_records(std::string_view bytes, RecordFormat format, const Schema& schema) {
  return format == RecordFormat::kCsv ? parse_csv(bytes, schema) : parse_jsonl(bytes, schema);
}

std::string serialize_records(const RecordSet& records, RecordFormat format) {
  const Schema& schema = records.schema();
  std::ostringstream out;
  if (format == RecordFormat::kCsv) {
    out << kIdColumn << ',' << kSourceColumn;
    for (const auto& a : schema.attributes()) out << ',' << csv_escape(a.name);
    out << '\n';
    for (const auto& r : records.records()) {
      out << csv_escape(r.record_id) << ',' << csv_escape(r.source_id);
      for (const auto& v : r.values) {
        out << ',';
        if (v) out << csv_escape(*v);
      }
      out << '\n';
    }
    return out.str();
  }
  for (const auto& r : records.records()) {
    json obj = json::object();
    obj[std::string(kIdColumn)] = r.record_id;
    obj[std::string(kSourceColumn)] = r.source_id;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      obj[schema[i].name] = r.values[i] ? json(*r.values[i]) : json(nullptr);
    }
    out << obj.dump() << '\n';
  }
  return out.str();
}

std::optional<std::string> normalize_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  bool pending_space = false;
  for (unsigned char c : value) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  if (out.empty()) return std::nullopt;
  return out;
}

Record normalize_record(const Record& record) {
  Record out;
  out.record_id = record.record_id;
  out.source_id = record.source_id;
  out.values.reserve(record.values.size());
  for (const auto& v : record.values) {
    out.values.push_back(v ? normalize_value(*v) : std::nullopt);
  }
  return out;
}

RecordSet normalize_records(const RecordSet& records) {
  std::vector<Record> out;
  out.reserve(records.size());
  for (const auto& r : records.records()) out.push_back(normalize_record(r));
  return RecordSet(records.schema(), std::move(out));
}

std::string digits_only(std::string_view value) {
  std::string out;
  for (char c : value) {
    if (c >= '0' && c <= '9') out.push_back(c);
  }
  return out;
}

bool is_anonymous(std::string_view value, AttributeKind kind, const AnonymousValueList& list) {
  const auto& values = list.values(kind);
  if (values.contains(std::string(value))) return true;
  if (kind == AttributeKind::kPhone || kind == AttributeKind::kDob) {
    const std::string digits = digits_only(value);
    return !digits.empty() && values.contains(digits);
  }
  return false;
}

}  // namespace xem
