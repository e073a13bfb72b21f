#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace xem {

enum class AttributeKind { kName, kAddress, kDob, kIdentifier, kPhone, kFreeText };

inline constexpr std::size_t kAttributeKindCount = 6;

std::string_view kind_name(AttributeKind kind);
// Unknown names map to FreeText.
AttributeKind parse_kind(std::string_view name);

struct AttributeSpec {
  std::string name;
  AttributeKind kind;

  bool operator==(const AttributeSpec&) const = default;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<AttributeSpec> attributes);

  const std::vector<AttributeSpec>& attributes() const { return attributes_; }
  std::size_t size() const { return attributes_.size(); }
  const AttributeSpec& operator[](std::size_t i) const { return attributes_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& doc);

  bool operator==(const Schema& other) const { return attributes_ == other.attributes_; }

 private:
  std::vector<AttributeSpec> attributes_;
};

// The organization schema used by the synthetic corpus.
Schema organization_schema();

// Values are positional: values[i] belongs to schema attribute i.
struct Record {
  std::string record_id;
  std::string source_id;
  std::vector<std::optional<std::string>> values;

  bool operator==(const Record&) const = default;
};

class RecordSet {
 public:
  RecordSet() = default;
  // Throws kUniqueness naming every duplicated id, kSchema on arity mismatch.
  RecordSet(Schema schema, std::vector<Record> records);

  const Schema& schema() const { return schema_; }
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  std::optional<std::size_t> position(std::string_view record_id) const;
  // Throws kLookup.
  const Record& at(std::string_view record_id) const;
  std::vector<std::string> ids() const;

  bool operator==(const RecordSet& other) const {
    return schema_ == other.schema_ && records_ == other.records_;
  }

 private:
  Schema schema_;
  std::vector<Record> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

class AnonymousValueList {
 public:
  AnonymousValueList() = default;

  void add(AttributeKind kind, std::string value);
  const std::set<std::string>& values(AttributeKind kind) const {
    return lists_[static_cast<std::size_t>(kind)];
  }

  nlohmann::json to_json() const;
  // Keys are kind names; values are normalized on load.
  static AnonymousValueList from_json(const nlohmann::json& doc);

  bool operator==(const AnonymousValueList&) const = default;

 private:
  std::array<std::set<std::string>, kAttributeKindCount> lists_;
};

// Matches data/anonymous_values.json.
const AnonymousValueList& default_anonymous_values();

enum class RecordFormat { kCsv, kJsonl };

struct RowIssue {
  std::size_t line = 0;  // 1-based physical line of the row start
  std::string message;
};

struct ParsedRecords {
  RecordSet records;
  std::vector<RowIssue> rejected;

  std::size_t row_count() const { return records.size() + rejected.size(); }
};

// Header problems raise kSchema; duplicate ids raise kUniqueness. Rows that
// cannot be parsed are returned in `rejected`.
ParsedRecords parse_records(std::string_view bytes, RecordFormat format,
                            const Schema& schema);

std::string serialize_records(const RecordSet& records, RecordFormat format);

// Lower-cases ASCII, collapses whitespace runs, trims; empty becomes absent.
std::optional<std::string> normalize_value(std::string_view value);
Record normalize_record(const Record& record);
RecordSet normalize_records(const RecordSet& records);

// Phone values also match the list after stripping non-digits.
bool is_anonymous(std::string_view value, AttributeKind kind,
                  const AnonymousValueList& list);

std::string digits_only(std::string_view value);

}  // namespace xem
