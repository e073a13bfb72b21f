#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/config.hpp"
#include "xem/error.hpp"
#include "xem/linker.hpp"
#include "xem/matcher.hpp"
#include "xem/pipeline.hpp"
#include "xem/records.hpp"

namespace httplib {
class Server;
}

namespace xem {

// An error with an HTTP status, raised by request handlers.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ApiResult {
  int status = 200;
  nlohmann::json body;
};

// HTTP status for a library error.
int http_status_for(ErrorCode code);
nlohmann::json error_body(std::string_view code, std::string_view message);

struct ServiceOptions {
  std::filesystem::path data_dir = "xem-data";
  std::optional<std::filesystem::path> config_path;  // used when the data dir has no config
  std::optional<std::uint64_t> seed;
  std::size_t default_page_size = 50;
};

struct EntityQuery {
  std::size_t min_size = 1;
  std::string sort = "size";  // "size" (desc, then id) or "id"
  std::size_t limit = 50;
  std::string page_token;
};

// State behind the REST API. Handlers may run on many threads: readers take
// a shared lock, and at most one mutation (ingest, match, train, unlink) is
// in flight; a second one is refused with 409.
class XemService {
 public:
  explicit XemService(ServiceOptions options);
  ~XemService();

  XemService(const XemService&) = delete;
  XemService& operator=(const XemService&) = delete;

  nlohmann::json health() const;
  nlohmann::json status() const;
  std::string state_fingerprint() const;

  // Replaces the dataset and drops every downstream artifact and rule.
  ApiResult ingest(std::string_view records, RecordFormat format,
                   const std::optional<nlohmann::json>& config,
                   const std::optional<nlohmann::json>& schema);

  // kind is "match" (match + link) or "train".
  ApiResult start_job(std::string_view kind);
  ApiResult job(std::string_view id) const;
  // Blocks until the job leaves pending/running.
  nlohmann::json wait_job(std::string_view id) const;

  ApiResult list_entities(const EntityQuery& query) const;
  ApiResult entity(std::string_view id) const;
  ApiResult report(std::string_view id) const;
  ApiResult explain(const nlohmann::json& body) const;
  ApiResult unlink(const nlohmann::json& body);
  ApiResult record(std::string_view id) const;
  ApiResult query_records(std::string_view attribute, std::string_view contains,
                          std::size_t limit) const;

  // Snapshot of the served partition, for consistency checks.
  std::optional<Partition> partition() const;
  std::vector<PairScore> pair_scores() const;
  std::vector<UnlinkRule> unlink_rules() const;
  std::optional<RecordSet> records() const;
  XemConfig config() const;

 private:
  struct Job {
    std::string id;
    std::string kind;
    std::string state = "pending";
    double progress = 0.0;
    std::string error;
    nlohmann::json result;
  };

  class MutationGuard;

  void load_from_disk();
  void require_dataset() const;
  void require_model() const;
  void run_job(std::shared_ptr<Job> job);
  void update_job(const std::shared_ptr<Job>& job, std::string state, double progress);
  nlohmann::json job_json(const Job& job) const;
  void clear_cache();
  nlohmann::json partition_summary() const;

  ServiceOptions options_;
  ArtifactStore store_;

  mutable std::shared_mutex state_mutex_;
  XemConfig config_;
  std::optional<RecordSet> records_;
  std::vector<PairScore> pairs_;
  std::optional<Partition> partition_;
  std::vector<UnlinkRule> rules_;
  std::optional<ProxyModel> model_;
  std::string model_fingerprint_;

  std::atomic<bool> mutating_{false};

  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, nlohmann::json> explain_cache_;

  mutable std::mutex jobs_mutex_;
  mutable std::condition_variable jobs_cv_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::thread> workers_;
  std::size_t next_job_ = 1;
};

// Registers every endpoint of `service` on `server`.
void mount_routes(httplib::Server& server, XemService& service);

// Blocks serving on host:port until the process is stopped.
void serve(const ServiceOptions& options, const std::string& host, int port);

// "host:port" from XEM_ADDR-style strings; throws kConfig.
std::pair<std::string, int> parse_address(std::string_view address);

}  // namespace xem
