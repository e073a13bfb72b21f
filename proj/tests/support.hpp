#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "xem/config.hpp"
#include "xem/linker.hpp"
#include "xem/matcher.hpp"
#include "xem/pipeline.hpp"
#include "xem/records.hpp"
#include "xem/synthgen.hpp"

namespace xem::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "xem-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Record make_record(std::string id, std::vector<std::optional<std::string>> values,
                          std::string source = "crm") {
  return {std::move(id), std::move(source), std::move(values)};
}

inline PairScore match_pair(std::string_view a, std::string_view b,
                            MatchClass c = MatchClass::kMatch) {
  PairScore s;
  s.pair = canonical_pair(a, b);
  s.total = c == MatchClass::kMatch ? 10.0 : (c == MatchClass::kClerical ? 5.0 : -5.0);
  s.match_class = c;
  return s;
}

// A few hundred synthetic records pushed through match, link and proxy
// training once per test process.
struct SmallRun {
  XemConfig config;
  RecordSet raw;
  RecordSet records;  // normalized
  GoldClusters gold;
  std::vector<PairScore> pairs;
  Partition partition;
  TrainedProxy proxy;
};

inline XemConfig small_config(std::uint64_t seed = 42, std::size_t n_base = 120) {
  XemConfig cfg;
  cfg.set_seed(seed);
  cfg.generator = acceptance_profile(seed);
  cfg.generator.n_base_entities = n_base;
  return cfg;
}

inline const SmallRun& small_run() {
  static const SmallRun run = [] {
    SmallRun r;
    r.config = small_config();
    SyntheticData data = generate(r.config.generator);
    r.raw = data.records;
    r.records = normalize_records(data.records);
    r.gold = data.gold;
    r.pairs = run_matching(r.records, r.config.matcher).scores;
    r.partition = link_records(r.records, r.pairs, {}, r.config.matcher);
    r.proxy = train_proxy(r.records, r.partition, r.pairs, r.config);
    return r;
  }();
  return run;
}

}  // namespace xem::testing
