#include "xem/config.hpp"

#include <fstream>
#include <sstream>

#include "xem/error.hpp"
#include "xem/json_util.hpp"
#include "xem/util.hpp"

namespace xem {

using nlohmann::json;
namespace fs = std::filesystem;

void XemConfig::set_seed(std::uint64_t s) {
  seed = s;
  generator.seed = s;
  training.model.seed = s;
  explain.mask.seed = s;
  explain.attribution.seed = s;
}

void XemConfig::validate() const {
  generator.validate();
  matcher.thresholds.validate();
  matcher.blocking.validate(schema);
  training.model.validate();
  if (!(training.neg_ratio > 0.0)) throw Error(ErrorCode::kConfig, "training.neg_ratio must be > 0");
  if (!(training.heldout_fraction >= 0.0 && training.heldout_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "training.heldout_fraction must be in [0, 1)");
  }
  if (codec.ngram_buckets == 0 || codec.exact_buckets == 0) {
    throw Error(ErrorCode::kConfig, "codec bucket counts must be >= 1");
  }
  explain.mask.validate();
  if (explain.top_k == 0) throw Error(ErrorCode::kConfig, "explain.top_k must be >= 1");
  if (explain.attribution.n_samples == 0) {
    throw Error(ErrorCode::kConfig, "explain.n_samples must be >= 1");
  }
}

FeatureCodec XemConfig::make_codec() const {
  return FeatureCodec(schema, codec.ngram_buckets, codec.exact_buckets);
}

json XemConfig::to_json() const {
  const TrainConfig& t = training.model;
  const MaskConfig& m = explain.mask;
  return {{"seed", seed},
          {"schema", schema.to_json()},
          {"generator", generator.to_json()},
          {"matcher", matcher.to_json()},
          {"codec", {{"ngram_buckets", codec.ngram_buckets}, {"exact_buckets", codec.exact_buckets}}},
          {"training",
           {{"hidden", t.hidden},
            {"learning_rate", t.learning_rate},
            {"epochs", t.epochs},
            {"l2", t.l2},
            {"momentum", t.momentum},
            {"neg_ratio", training.neg_ratio},
            {"heldout_fraction", training.heldout_fraction}}},
          {"explain",
           {{"iterations", m.iterations},
            {"learning_rate", m.learning_rate},
            {"sparsity", m.sparsity},
            {"entropy", m.entropy},
            {"init_logit", m.init_logit},
            {"init_noise", m.init_noise},
            {"n_samples", explain.attribution.n_samples},
            {"top_k", explain.top_k},
            {"weak_threshold", explain.weak_threshold}}}};
}

XemConfig XemConfig::from_json(const json& doc, std::optional<std::uint64_t> seed_override) {
  require_known_keys(doc, {"seed", "schema", "generator", "matcher", "codec", "training", "explain"},
                     "config");
  XemConfig cfg;
  const std::uint64_t seed =
      seed_override ? *seed_override : read_number<std::uint64_t>(doc, "seed", 42, "config");
  if (doc.contains("schema")) cfg.schema = Schema::from_json(doc["schema"]);
  if (doc.contains("generator")) cfg.generator = GenConfig::from_json(doc["generator"], seed);
  if (doc.contains("matcher")) cfg.matcher = MatcherConfig::from_json(doc["matcher"]);
  if (doc.contains("codec")) {
    const auto& c = doc["codec"];
    require_known_keys(c, {"ngram_buckets", "exact_buckets"}, "codec");
    cfg.codec.ngram_buckets = read_number<std::size_t>(c, "ngram_buckets", 64, "codec");
    cfg.codec.exact_buckets = read_number<std::size_t>(c, "exact_buckets", 16, "codec");
  }
  if (doc.contains("training")) {
    const auto& t = doc["training"];
    require_known_keys(t, {"hidden", "learning_rate", "epochs", "l2", "momentum", "neg_ratio",
                           "heldout_fraction"},
                       "training");
    TrainConfig& m = cfg.training.model;
    m.hidden = read_number<std::size_t>(t, "hidden", m.hidden, "training");
    m.learning_rate = read_number<double>(t, "learning_rate", m.learning_rate, "training");
    m.epochs = read_number<std::size_t>(t, "epochs", m.epochs, "training");
    m.l2 = read_number<double>(t, "l2", m.l2, "training");
    m.momentum = read_number<double>(t, "momentum", m.momentum, "training");
    cfg.training.neg_ratio = read_number<double>(t, "neg_ratio", cfg.training.neg_ratio, "training");
    cfg.training.heldout_fraction =
        read_number<double>(t, "heldout_fraction", cfg.training.heldout_fraction, "training");
  }
  if (doc.contains("explain")) {
    const auto& e = doc["explain"];
    require_known_keys(e, {"iterations", "learning_rate", "sparsity", "entropy", "init_logit",
                           "init_noise", "n_samples", "top_k", "weak_threshold"},
                       "explain");
    MaskConfig& m = cfg.explain.mask;
    m.iterations = read_number<std::size_t>(e, "iterations", m.iterations, "explain");
    m.learning_rate = read_number<double>(e, "learning_rate", m.learning_rate, "explain");
    m.sparsity = read_number<double>(e, "sparsity", m.sparsity, "explain");
    m.entropy = read_number<double>(e, "entropy", m.entropy, "explain");
    m.init_logit = read_number<double>(e, "init_logit", m.init_logit, "explain");
    m.init_noise = read_number<double>(e, "init_noise", m.init_noise, "explain");
    cfg.explain.attribution.n_samples =
        read_number<std::size_t>(e, "n_samples", cfg.explain.attribution.n_samples, "explain");
    cfg.explain.top_k = read_number<std::size_t>(e, "top_k", cfg.explain.top_k, "explain");
    cfg.explain.weak_threshold =
        read_number<double>(e, "weak_threshold", cfg.explain.weak_threshold, "explain");
  }
  cfg.set_seed(seed);
  cfg.validate();
  return cfg;
}

std::string XemConfig::fingerprint() const { return xem::fingerprint(to_json().dump()); }

XemConfig load_config_file(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return XemConfig::from_json(doc, seed_override);
}

std::string_view producer_of(std::string_view name) {
  if (name == artifact::kConfig || name == artifact::kRecords || name == artifact::kGold) {
    return "generate";
  }
  if (name == artifact::kPairs) return "match";
  if (name == artifact::kPartition) return "link";
  if (name == artifact::kGraph || name == artifact::kModel || name == artifact::kTraining) {
    return "train-proxy";
  }
  if (name == artifact::kMetrics) return "eval";
  return "unlink";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

ArtifactStore::ArtifactStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir_.string() + ": " + ec.message());
}

bool ArtifactStore::exists(std::string_view name) const { return fs::exists(path_of(name)); }

std::string ArtifactStore::read(std::string_view name) const {
  if (!exists(name)) {
    throw Error(ErrorCode::kMissingArtifact, std::string(name) + " not found in " + dir_.string() +
                                                 "; run " + std::string(producer_of(name)) +
                                                 " first");
  }
  return read_file(path_of(name));
}

json ArtifactStore::manifest() const {
  if (!exists(artifact::kManifest)) return {{"artifacts", json::object()}};
  try {
    return json::parse(read_file(path_of(artifact::kManifest)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, "corrupt manifest.json: " + std::string(e.what()));
  }
}

void ArtifactStore::write(std::string_view name, std::string_view content,
                          std::string_view config_fingerprint) {
  write_file_atomic(path_of(name), content);
  json m = manifest();
  m["artifacts"][std::string(name)] = {{"config_fingerprint", config_fingerprint},
                                       {"content_hash", fingerprint(content)}};
  write_file_atomic(path_of(artifact::kManifest), m.dump(2) + "\n");
}

void ArtifactStore::append_line(std::string_view name, std::string_view line) {
  std::ofstream out(path_of(name), std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path_of(name).string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path_of(name).string());
}

void ArtifactStore::remove(std::string_view name) {
  std::error_code ec;
  fs::remove(path_of(name), ec);
  json m = manifest();
  if (m["artifacts"].erase(std::string(name)) > 0) {
    write_file_atomic(path_of(artifact::kManifest), m.dump(2) + "\n");
  }
}

std::optional<std::string> ArtifactStore::fingerprint_of(std::string_view name) const {
  const json m = manifest();
  const auto& arts = m["artifacts"];
  auto it = arts.find(std::string(name));
  if (it == arts.end()) return std::nullopt;
  return it->at("config_fingerprint").get<std::string>();
}

void ArtifactStore::check_fingerprint(std::string_view name, std::string_view expected,
                                      bool force) const {
  if (force) return;
  const auto fp = fingerprint_of(name);
  if (!fp) {
    throw Error(ErrorCode::kFingerprint, std::string(name) +
                                             " has no recorded config fingerprint; rerun " +
                                             std::string(producer_of(name)) + " or pass --force");
  }
  if (*fp != expected) {
    throw Error(ErrorCode::kFingerprint,
                std::string(name) + " was produced under config " + *fp + " but the current config is " +
                    std::string(expected) + "; rerun " + std::string(producer_of(name)) +
                    " or pass --force");
  }
}

}  // namespace xem
