#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "xem/explainers.hpp"
#include "xem/gnn.hpp"
#include "xem/matcher.hpp"
#include "xem/proxygraph.hpp"
#include "xem/records.hpp"
#include "xem/synthgen.hpp"

namespace xem {

struct CodecConfig {
  std::size_t ngram_buckets = 64;
  std::size_t exact_buckets = 16;
};

struct TrainingConfig {
  TrainConfig model;
  double neg_ratio = 1.0;
  double heldout_fraction = 0.2;
};

// One file for every stage. The top-level seed is copied into each section
// that draws random numbers.
struct XemConfig {
  std::uint64_t seed = 42;
  Schema schema = organization_schema();
  GenConfig generator = acceptance_profile(42);
  MatcherConfig matcher = default_matcher_config();
  CodecConfig codec;
  TrainingConfig training;
  ReportConfig explain;

  void set_seed(std::uint64_t s);
  void validate() const;
  FeatureCodec make_codec() const;

  nlohmann::json to_json() const;
  // Strict; missing sections keep defaults. `seed_override` wins over the
  // document's seed.
  static XemConfig from_json(const nlohmann::json& doc,
                             std::optional<std::uint64_t> seed_override = std::nullopt);
  std::string fingerprint() const;
};

XemConfig load_config_file(const std::filesystem::path& path,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

// Artifact names in a run directory.
namespace artifact {
inline constexpr std::string_view kConfig = "config.json";
inline constexpr std::string_view kRecords = "records.jsonl";
inline constexpr std::string_view kGold = "gold.json";
inline constexpr std::string_view kPairs = "pairs.jsonl";
inline constexpr std::string_view kPartition = "partition.json";
inline constexpr std::string_view kGraph = "graph.json";
inline constexpr std::string_view kModel = "model.json";
inline constexpr std::string_view kTraining = "training.json";
inline constexpr std::string_view kMetrics = "metrics.json";
inline constexpr std::string_view kUnlinks = "unlinks.jsonl";
inline constexpr std::string_view kManifest = "manifest.json";
}  // namespace artifact

// The subcommand that writes an artifact, for "run X first" messages.
std::string_view producer_of(std::string_view name);

// A run directory. manifest.json records, per artifact, the config
// fingerprint of the run that wrote it and a content hash.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_of(std::string_view name) const { return dir_ / std::string(name); }
  bool exists(std::string_view name) const;

  // Throws kMissingArtifact naming the producing subcommand.
  std::string read(std::string_view name) const;
  // Written through a temporary file and renamed into place.
  void write(std::string_view name, std::string_view content, std::string_view config_fingerprint);
  void append_line(std::string_view name, std::string_view line);
  void remove(std::string_view name);

  std::optional<std::string> fingerprint_of(std::string_view name) const;
  // Throws kFingerprint when `name` was produced under another config,
  // unless `force`.
  void check_fingerprint(std::string_view name, std::string_view expected, bool force) const;

 private:
  nlohmann::json manifest() const;

  std::filesystem::path dir_;
};

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace xem
