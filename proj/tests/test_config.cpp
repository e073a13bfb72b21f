#include <gtest/gtest.h>

#include "support.hpp"
#include "xem/config.hpp"
#include "xem/error.hpp"

using namespace xem;
using xem::testing::TempDir;

namespace {

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

TEST(Config, JsonRoundTripAndFingerprint) {
  const XemConfig cfg;
  const XemConfig back = XemConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.fingerprint(), cfg.fingerprint());
  EXPECT_EQ(cfg.fingerprint().size(), 16u);

  XemConfig other = cfg;
  other.set_seed(43);
  EXPECT_NE(other.fingerprint(), cfg.fingerprint());
  EXPECT_EQ(other.generator.seed, 43u);
  EXPECT_EQ(other.training.model.seed, 43u);
  EXPECT_EQ(other.explain.mask.seed, 43u);
  EXPECT_EQ(other.explain.attribution.seed, 43u);
  EXPECT_EQ(XemConfig::from_json(cfg.to_json(), 43).fingerprint(), other.fingerprint());
}

TEST(Config, StrictKeys) {
  auto doc = XemConfig().to_json();
  doc["colour"] = "red";
  EXPECT_EQ(code_of([&] { XemConfig::from_json(doc); }), ErrorCode::kConfig);
  auto nested = XemConfig().to_json();
  nested["explain"]["colour"] = 1;
  EXPECT_EQ(code_of([&] { XemConfig::from_json(nested); }), ErrorCode::kConfig);
  auto bad = XemConfig().to_json();
  bad["training"]["epochs"] = 0;
  EXPECT_EQ(code_of([&] { XemConfig::from_json(bad); }), ErrorCode::kConfig);
  const auto partial = XemConfig::from_json(nlohmann::json::parse(R"({"seed": 7})"));
  EXPECT_EQ(partial.seed, 7u);
  EXPECT_EQ(partial.generator.seed, 7u);
}

TEST(Config, CodecDimension) { EXPECT_EQ(XemConfig().make_codec().dimension(), 246u); }

TEST(Config, ArtifactStoreManifest) {
  TempDir d;
  ArtifactStore store(d.path() / "run");
  EXPECT_FALSE(store.exists(artifact::kPairs));
  try {
    store.read(artifact::kModel);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingArtifact);
    EXPECT_NE(std::string(e.what()).find("train-proxy"), std::string::npos) << e.what();
  }
  store.write(artifact::kPairs, "x\n", "fp1");
  EXPECT_EQ(store.read(artifact::kPairs), "x\n");
  EXPECT_EQ(store.fingerprint_of(artifact::kPairs), "fp1");
  EXPECT_NO_THROW(store.check_fingerprint(artifact::kPairs, "fp1", false));
  EXPECT_EQ(code_of([&] { store.check_fingerprint(artifact::kPairs, "fp2", false); }), ErrorCode::kFingerprint);
  EXPECT_NO_THROW(store.check_fingerprint(artifact::kPairs, "fp2", true));
  store.append_line(artifact::kUnlinks, "{}");
  store.append_line(artifact::kUnlinks, "{}");
  EXPECT_EQ(store.read(artifact::kUnlinks), "{}\n{}\n");
  store.remove(artifact::kPairs);
  EXPECT_FALSE(store.exists(artifact::kPairs));
  EXPECT_EQ(producer_of(artifact::kPartition), "link");
}
