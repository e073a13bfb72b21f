#include <gtest/gtest.h>

#include "support.hpp"
#include "xem/error.hpp"
#include "xem/records.hpp"
#include "xem/util.hpp"

using namespace xem;
using xem::testing::make_record;

namespace {

Schema two_column_schema() {
  return Schema({{"name", AttributeKind::kName}, {"phone", AttributeKind::kPhone}});
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an xem::Error";
  return ErrorCode::kIo;
}

}  // namespace

TEST(Records, CsvRowsArePreserved) {
  const std::string csv =
      "record_id,source_id,name,phone\n"
      "r1,crm,Acme Corp,555-0100\n"
      "r2,erp,\"Beta, Inc\",\n"
      "r3,crm,\"Gamma \"\"G\"\" Ltd\",555-0101\n";
  const auto parsed = parse_records(csv, RecordFormat::kCsv, two_column_schema());
  ASSERT_EQ(parsed.records.size(), 3u);
  EXPECT_TRUE(parsed.rejected.empty());
  EXPECT_EQ(parsed.records.at("r2").values[0], "Beta, Inc");
  EXPECT_FALSE(parsed.records.at("r2").values[1].has_value());
  EXPECT_EQ(parsed.records.at("r3").values[0], "Gamma \"G\" Ltd");
}

TEST(Records, DuplicateIdIsNamed) {
  const std::string csv = "record_id,name\nr1,a\nr2,b\nr1,c\n";
  try {
    parse_records(csv, RecordFormat::kCsv, two_column_schema());
    FAIL() << "expected a uniqueness error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUniqueness);
    EXPECT_NE(std::string(e.what()).find("r1"), std::string::npos);
  }
}

TEST(Records, MalformedHeaderIsSchemaError) {
  EXPECT_EQ(code_of([] { parse_records("name,phone\nx,y\n", RecordFormat::kCsv, two_column_schema()); }),
            ErrorCode::kSchema);
  EXPECT_EQ(code_of([] { parse_records("record_id,colour\nr1,red\n", RecordFormat::kCsv, two_column_schema()); }),
            ErrorCode::kSchema);
  EXPECT_EQ(code_of([] { parse_records("record_id,name,name\nr1,a,b\n", RecordFormat::kCsv, two_column_schema()); }),
            ErrorCode::kSchema);
  EXPECT_EQ(code_of([] { parse_records("", RecordFormat::kCsv, two_column_schema()); }), ErrorCode::kSchema);
}

TEST(Records, BadRowsAreReportedNotDropped) {
  const std::string csv = "record_id,name,phone\nr1,a,1\nr2,b\nr3,c,3\n,d,4\n";
  const auto parsed = parse_records(csv, RecordFormat::kCsv, two_column_schema());
  EXPECT_EQ(parsed.records.size(), 2u);
  ASSERT_EQ(parsed.rejected.size(), 2u);
  EXPECT_EQ(parsed.rejected[0].line, 3u);
  EXPECT_EQ(parsed.rejected[1].line, 5u);
  EXPECT_EQ(parsed.row_count(), 4u);

  const std::string jsonl = "{\"record_id\":\"a\",\"name\":\"x\"}\nnot json\n[1]\n{\"record_id\":\"b\",\"phone\":null}\n";
  const auto pj = parse_records(jsonl, RecordFormat::kJsonl, two_column_schema());
  EXPECT_EQ(pj.records.size(), 2u);
  EXPECT_EQ(pj.rejected.size(), 2u);
  EXPECT_EQ(pj.row_count(), 4u);
}

TEST(Records, SyntheticCorpusParsesWhole) {
  const SyntheticData data = generate(acceptance_profile(42));
  EXPECT_GE(data.records.size(), 10000u);
  const auto parsed = parse_records(serialize_records(data.records, RecordFormat::kJsonl), RecordFormat::kJsonl,
                                    organization_schema());
  EXPECT_EQ(parsed.records.size(), data.records.size());
  EXPECT_TRUE(parsed.rejected.empty());
}

TEST(Records, RoundTripBothFormats) {
  const auto& run = xem::testing::small_run();
  for (auto format : {RecordFormat::kCsv, RecordFormat::kJsonl}) {
    const auto once = parse_records(serialize_records(run.raw, format), format, run.raw.schema());
    const auto twice = parse_records(serialize_records(once.records, format), format, run.raw.schema());
    EXPECT_TRUE(once.records == run.raw);
    EXPECT_TRUE(twice.records == once.records);
  }
}

TEST(Records, NormalizeRules) {
  EXPECT_EQ(normalize_value("  ACME  Corp "), "acme corp");
  EXPECT_FALSE(normalize_value("").has_value());
  EXPECT_FALSE(normalize_value(" \t ").has_value());
  EXPECT_EQ(normalize_value("A\tB\nC"), "a b c");
  const Record r = normalize_record(make_record("r1", {std::string(""), std::string(" 555 0100 ")}));
  EXPECT_FALSE(r.values[0].has_value());
  EXPECT_EQ(r.values[1], "555 0100");
}

TEST(Records, NormalizeIsIdempotentAndAddsNothing) {
  CounterRng rng(1234);
  const std::string alphabet = "aBc D\t\n xyZ.-,";
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::optional<std::string>> values;
    for (int a = 0; a < 2; ++a) {
      if (rng.bernoulli(0.2)) {
        values.emplace_back();
        continue;
      }
      std::string v;
      const auto len = rng.below(12);
      for (std::uint64_t k = 0; k < len; ++k) v += alphabet[rng.below(alphabet.size())];
      values.emplace_back(v);
    }
    const Record r = make_record("r" + std::to_string(i), values);
    const Record once = normalize_record(r);
    EXPECT_EQ(normalize_record(once), once);
    for (std::size_t a = 0; a < values.size(); ++a) {
      if (!r.values[a]) EXPECT_FALSE(once.values[a].has_value());
      if (once.values[a]) EXPECT_FALSE(once.values[a]->empty());
    }
  }
}

TEST(Records, AnonymousValues) {
  const auto& anon = default_anonymous_values();
  EXPECT_TRUE(is_anonymous("n/a", AttributeKind::kName, anon));
  EXPECT_FALSE(is_anonymous("acme corp", AttributeKind::kName, anon));
  EXPECT_TRUE(is_anonymous("9999999999", AttributeKind::kPhone, anon));
  EXPECT_TRUE(is_anonymous("(999) 999-9999", AttributeKind::kPhone, anon));
  EXPECT_FALSE(is_anonymous("5550100", AttributeKind::kPhone, anon));
}

TEST(Records, ShippedAnonymousListMatchesCompiledDefault) {
  const std::string text = read_file(std::filesystem::path(XEM_SOURCE_DIR) / "data" / "anonymous_values.json");
  EXPECT_TRUE(AnonymousValueList::from_json(nlohmann::json::parse(text)) == default_anonymous_values());
}

TEST(Records, UnknownKindFallsBackToFreeText) {
  const Schema s = Schema::from_json(nlohmann::json::parse(
      R"({"attributes":[{"name":"name","kind":"Name"},{"name":"notes","kind":"Colour"}]})"));
  EXPECT_EQ(s[1].kind, AttributeKind::kFreeText);
  EXPECT_EQ(Schema::from_json(s.to_json()), s);
}

TEST(Records, ReservedAndDuplicateAttributesRejected) {
  EXPECT_EQ(code_of([] { Schema({{"record_id", AttributeKind::kName}}); }), ErrorCode::kSchema);
  EXPECT_EQ(code_of([] { Schema({{"a", AttributeKind::kName}, {"a", AttributeKind::kPhone}}); }),
            ErrorCode::kSchema);
}
