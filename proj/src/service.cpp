#include "xem/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include <httplib.h>

#include "xem/error.hpp"
#include "xem/explainers.hpp"
#include "xem/util.hpp"

namespace xem {

using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string require_string(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body[key].is_string()) {
    throw HttpError(400, "bad_request", std::string("body must carry a string \"") + key + "\"");
  }
  return body[key].get<std::string>();
}

std::size_t parse_size(std::string_view text, const char* name) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw HttpError(400, "bad_request", std::string(name) + " must be a non-negative integer");
  }
  return v;
}

json entity_summary(const Entity& e) {
  return {{"entity_id", e.entity_id}, {"size", e.size()}, {"representative", e.representative}};
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLookup:
      return 404;
    case ErrorCode::kSchema:
    case ErrorCode::kUniqueness:
    case ErrorCode::kParse:
    case ErrorCode::kConfig:
    case ErrorCode::kPrecondition:
      return 400;
    case ErrorCode::kStaleness:
    case ErrorCode::kMissingArtifact:
    case ErrorCode::kFingerprint:
    case ErrorCode::kTrainingSet:
      return 409;
    default:
      return 500;
  }
}

json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

class XemService::MutationGuard {
 public:
  explicit MutationGuard(std::atomic<bool>& flag) : flag_(flag) {
    bool expected = false;
    if (!flag_.compare_exchange_strong(expected, true)) {
      throw HttpError(409, "busy", "another mutating operation is in progress");
    }
  }
  ~MutationGuard() {
    if (owned_) flag_ = false;
  }
  // Hands the flag to a job thread, which clears it when done.
  void release_to_job() { owned_ = false; }

 private:
  std::atomic<bool>& flag_;
  bool owned_ = true;
};

XemService::XemService(ServiceOptions options)
    : options_(std::move(options)), store_(options_.data_dir) {
  load_from_disk();
}

XemService::~XemService() {
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

void XemService::load_from_disk() {
  if (store_.exists(artifact::kConfig)) {
    config_ = load_config_file(store_.path_of(artifact::kConfig), options_.seed);
  } else if (options_.config_path) {
    config_ = load_config_file(*options_.config_path, options_.seed);
  } else if (options_.seed) {
    config_.set_seed(*options_.seed);
    config_.generator = acceptance_profile(*options_.seed);
  }
  if (!store_.exists(artifact::kRecords)) return;
  records_ = load_records(store_, config_);
  if (store_.exists(artifact::kPairs)) pairs_ = load_pairs(store_);
  rules_ = load_unlinks(store_);
  partition_ = link_records(*records_, pairs_, rules_, config_.matcher);
  if (store_.exists(artifact::kModel) && store_.exists(artifact::kGraph)) {
    model_ = load_proxy(store_, config_);
    model_fingerprint_ = model_->params.fingerprint();
  }
}

void XemService::require_dataset() const {
  if (!records_) throw HttpError(409, "no_dataset", "no dataset loaded; POST /datasets first");
}

void XemService::require_model() const {
  if (!model_) {
    throw HttpError(409, "model_not_trained", "no proxy model; POST /jobs/train first");
  }
}

json XemService::health() const { return {{"status", "ok"}}; }

std::string XemService::state_fingerprint() const {
  std::shared_lock lock(state_mutex_);
  std::string material = config_.fingerprint();
  material += '|' + (records_ ? fingerprint(serialize_records(*records_, RecordFormat::kJsonl)) : "-");
  material += '|' + fingerprint(write_pair_scores(pairs_));
  material += '|' + (partition_ ? fingerprint(partition_->to_json().dump()) : "-");
  for (const auto& r : rules_) material += '|' + unlink_rule_to_json(r).dump();
  material += '|' + model_fingerprint_;
  return fingerprint(material);
}

json XemService::partition_summary() const {
  if (!partition_) return nullptr;
  std::size_t non_singleton = 0;
  for (const auto& e : partition_->entities()) non_singleton += e.size() > 1 ? 1 : 0;
  return {{"entities", partition_->entities().size()},
          {"non_singleton_entities", non_singleton},
          {"records", partition_->record_count()},
          {"non_separating_unlinks", partition_->non_separating_rules().size()}};
}

json XemService::status() const {
  json out;
  {
    std::shared_lock lock(state_mutex_);
    out = {{"dataset_loaded", records_.has_value()},
           {"records", records_ ? records_->size() : 0},
           {"pairs", pairs_.size()},
           {"unlink_rules", rules_.size()},
           {"partition", partition_summary()},
           {"model_trained", model_.has_value()},
           {"model_fingerprint", model_ ? json(model_fingerprint_) : json(nullptr)},
           {"config_fingerprint", config_.fingerprint()},
           {"mutation_in_progress", mutating_.load()}};
  }
  out["state_fingerprint"] = state_fingerprint();
  return out;
}

void XemService::clear_cache() {
  std::lock_guard lock(cache_mutex_);
  explain_cache_.clear();
}

ApiResult XemService::ingest(std::string_view bytes, RecordFormat format,
                             const std::optional<json>& config_doc,
                             const std::optional<json>& schema_doc) {
  MutationGuard guard(mutating_);
  XemConfig cfg;
  {
    std::shared_lock lock(state_mutex_);
    cfg = config_;
  }
  if (config_doc) cfg = XemConfig::from_json(*config_doc, options_.seed);
  if (schema_doc) {
    cfg.schema = Schema::from_json(*schema_doc);
    cfg.validate();
  }
  ParsedRecords parsed = parse_records(bytes, format, cfg.schema);
  RecordSet normalized = normalize_records(parsed.records);

  const std::string fp = cfg.fingerprint();
  for (auto name : {artifact::kPairs, artifact::kPartition, artifact::kGraph, artifact::kModel,
                    artifact::kTraining, artifact::kMetrics, artifact::kUnlinks, artifact::kGold}) {
    store_.remove(name);
  }
  store_.write(artifact::kConfig, cfg.to_json().dump(2) + "\n", fp);
  store_.write(artifact::kRecords, serialize_records(parsed.records, RecordFormat::kJsonl), fp);
  Partition singletons = link_records(normalized, {}, {}, cfg.matcher);
  store_.write(artifact::kPartition, singletons.to_json().dump() + "\n", fp);

  json rejected = json::array();
  for (const auto& r : parsed.rejected) rejected.push_back({{"line", r.line}, {"message", r.message}});
  {
    std::unique_lock lock(state_mutex_);
    config_ = std::move(cfg);
    records_ = std::move(normalized);
    pairs_.clear();
    rules_.clear();
    partition_ = std::move(singletons);
    model_.reset();
    model_fingerprint_.clear();
  }
  clear_cache();
  return {201, {{"records", parsed.records.size()}, {"rejected", rejected}}};
}

json XemService::job_json(const Job& job) const {
  json out = {{"id", job.id}, {"kind", job.kind}, {"state", job.state}, {"progress", job.progress}};
  if (!job.error.empty()) out["error"] = job.error;
  if (!job.result.is_null()) out["result"] = job.result;
  return out;
}

ApiResult XemService::start_job(std::string_view kind) {
  if (kind != "match" && kind != "train") {
    throw HttpError(404, "not_found", "unknown job kind \"" + std::string(kind) + "\"");
  }
  MutationGuard guard(mutating_);
  {
    std::shared_lock lock(state_mutex_);
    require_dataset();
    if (kind == "train" && pairs_.empty()) {
      throw HttpError(409, "no_pairs", "no match results; POST /jobs/match first");
    }
  }
  auto job = std::make_shared<Job>();
  {
    std::lock_guard lock(jobs_mutex_);
    job->id = "job-" + std::to_string(next_job_++);
    job->kind = std::string(kind);
    jobs_[job->id] = job;
    workers_.emplace_back([this, job] { run_job(job); });
  }
  guard.release_to_job();
  std::lock_guard lock(jobs_mutex_);
  return {202, job_json(*job)};
}

void XemService::update_job(const std::shared_ptr<Job>& job, std::string state, double progress) {
  {
    std::lock_guard lock(jobs_mutex_);
    job->state = std::move(state);
    job->progress = progress;
  }
  jobs_cv_.notify_all();
}

void XemService::run_job(std::shared_ptr<Job> job) {
  update_job(job, "running", 0.0);
  json result;
  std::string error;
  try {
    XemConfig cfg;
    RecordSet records;
    std::vector<UnlinkRule> rules;
    std::vector<PairScore> pairs;
    std::optional<Partition> partition;
    {
      std::shared_lock lock(state_mutex_);
      cfg = config_;
      records = *records_;
      rules = rules_;
      pairs = pairs_;
      partition = partition_;
    }
    const std::string fp = cfg.fingerprint();
    if (job->kind == "match") {
      MatchRun run = run_matching(records, cfg.matcher);
      update_job(job, "running", 0.5);
      Partition p = link_records(records, run.scores, rules, cfg.matcher);
      store_.write(artifact::kPairs, write_pair_scores(run.scores), fp);
      store_.write(artifact::kPartition, p.to_json().dump() + "\n", fp);
      result = {{"pairs", run.scores.size()}, {"skipped_blocks", run.skipped_blocks},
                {"entities", p.entities().size()}};
      std::unique_lock lock(state_mutex_);
      pairs_ = std::move(run.scores);
      partition_ = std::move(p);
    } else {
      TrainedProxy trained = train_proxy(records, *partition, pairs, cfg);
      update_job(job, "running", 0.9);
      store_.write(artifact::kGraph, trained.model.graph.to_json().dump() + "\n", fp);
      store_.write(artifact::kModel, model_to_json(trained.model.params).dump() + "\n", fp);
      store_.write(artifact::kTraining, trained.summary.to_json().dump(2) + "\n", fp);
      result = trained.summary.to_json();
      result["model_fingerprint"] = trained.model.params.fingerprint();
      std::unique_lock lock(state_mutex_);
      model_fingerprint_ = trained.model.params.fingerprint();
      model_ = std::move(trained.model);
    }
    clear_cache();
  } catch (const std::exception& e) {
    error = e.what();
  }
  {
    std::lock_guard lock(jobs_mutex_);
    job->result = std::move(result);
    job->error = error;
    job->state = error.empty() ? "done" : "failed";
    job->progress = error.empty() ? 1.0 : job->progress;
  }
  mutating_ = false;
  jobs_cv_.notify_all();
}

ApiResult XemService::job(std::string_view id) const {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(std::string(id));
  if (it == jobs_.end()) throw HttpError(404, "not_found", "unknown job \"" + std::string(id) + "\"");
  return {200, job_json(*it->second)};
}

json XemService::wait_job(std::string_view id) const {
  std::unique_lock lock(jobs_mutex_);
  auto it = jobs_.find(std::string(id));
  if (it == jobs_.end()) throw HttpError(404, "not_found", "unknown job \"" + std::string(id) + "\"");
  const auto job = it->second;
  jobs_cv_.wait(lock, [&] {
    return (job->state == "done" || job->state == "failed") && !mutating_.load();
  });
  return job_json(*job);
}

ApiResult XemService::list_entities(const EntityQuery& q) const {
  std::shared_lock lock(state_mutex_);
  require_dataset();
  if (q.sort != "size" && q.sort != "id") {
    throw HttpError(400, "bad_request", "sort must be \"size\" or \"id\"");
  }
  if (q.limit == 0) throw HttpError(400, "bad_request", "limit must be >= 1");
  std::vector<const Entity*> selected;
  for (const auto& e : partition_->entities()) {
    if (e.size() >= q.min_size) selected.push_back(&e);
  }
  if (q.sort == "size") {
    std::stable_sort(selected.begin(), selected.end(), [](const Entity* x, const Entity* y) {
      if (x->size() != y->size()) return x->size() > y->size();
      return x->entity_id < y->entity_id;
    });
  }
  const std::size_t offset = q.page_token.empty() ? 0 : parse_size(q.page_token, "page_token");
  json items = json::array();
  for (std::size_t i = offset; i < selected.size() && i < offset + q.limit; ++i) {
    items.push_back(entity_summary(*selected[i]));
  }
  json out = {{"items", items}, {"total", selected.size()}};
  out["next_page_token"] =
      offset + q.limit < selected.size() ? json(std::to_string(offset + q.limit)) : json(nullptr);
  return {200, out};
}

ApiResult XemService::entity(std::string_view id) const {
  std::shared_lock lock(state_mutex_);
  require_dataset();
  const Entity* e = partition_->find(id);
  if (e == nullptr) throw HttpError(404, "not_found", "unknown entity \"" + std::string(id) + "\"");
  const std::set<std::string> members(e->members.begin(), e->members.end());
  json pairs = json::array();
  for (const auto& s : pairs_) {
    if (members.contains(s.pair.a) && members.contains(s.pair.b)) pairs.push_back(pair_score_to_json(s));
  }
  json edges = json::array();
  for (const auto& [m, r] : e->edges) edges.push_back({{"member", m}, {"representative", r}});
  return {200,
          {{"entity_id", e->entity_id},
           {"representative", e->representative},
           {"size", e->size()},
           {"members", e->members},
           {"edges", edges},
           {"pairs", pairs}}};
}

ApiResult XemService::report(std::string_view id) const {
  std::shared_lock lock(state_mutex_);
  require_dataset();
  const Entity* e = partition_->find(id);
  if (e == nullptr) throw HttpError(404, "not_found", "unknown entity \"" + std::string(id) + "\"");
  require_model();
  const ExplanationReport r = build_explanation_report(*e, *records_, pairs_, rules_, model_->params,
                                                       model_->graph, config_.matcher, config_.explain);
  return {200, r.to_json()};
}

ApiResult XemService::explain(const json& body) const {
  const std::string a = require_string(body, "a");
  const std::string b = require_string(body, "b");
  if (a == b) throw HttpError(400, "bad_request", "a pair needs two distinct records");
  std::shared_lock lock(state_mutex_);
  require_dataset();
  for (const auto& id : {a, b}) {
    if (!records_->position(id)) throw HttpError(404, "not_found", "unknown record \"" + id + "\"");
  }
  require_model();
  const RecordPair pair = canonical_pair(a, b);
  const std::string key = pair.a + '\x1f' + pair.b + '\x1f' + model_fingerprint_;
  {
    std::lock_guard cache_lock(cache_mutex_);
    auto it = explain_cache_.find(key);
    if (it != explain_cache_.end()) return {200, it->second};
  }
  for (const auto& id : {a, b}) {
    if (!model_->graph.contains(id)) {
      throw Error(ErrorCode::kStaleness, "record \"" + id +
                                             "\" is missing from the proxy graph; retrain the proxy");
    }
  }
  const FeatureMask mask = explain_pair_mask(model_->params, model_->graph, pair.a, pair.b,
                                             config_.explain.mask);
  const Attribution attr =
      attribute_contributions(engine_scorer(records_->schema(), config_.matcher),
                              records_->at(pair.a), records_->at(pair.b), records_->schema(),
                              config_.explain.attribution);
  json top = json::array();
  for (const auto& [name, v] : mask.top(config_.explain.top_k)) {
    top.push_back({{"attribute", name}, {"score", v}});
  }
  json rollup = json::object();
  for (const auto& [name, v] : mask.rollup) rollup[name] = v;
  json out = {{"pair", {pair.a, pair.b}},
              {"proxy_probability", mask.p_original},
              {"masked_probability", mask.p_masked},
              {"fidelity", mask.fidelity},
              {"sparsity", mask.sparsity()},
              {"rollup", rollup},
              {"top_attributes", top},
              {"attribution", attr.to_json()},
              {"model_fingerprint", model_fingerprint_}};
  std::lock_guard cache_lock(cache_mutex_);
  return {200, explain_cache_.emplace(key, std::move(out)).first->second};
}

ApiResult XemService::unlink(const json& body) {
  const std::string a = require_string(body, "a");
  const std::string b = require_string(body, "b");
  const std::string author = body.is_object() && body.contains("author") && body["author"].is_string()
                                 ? body["author"].get<std::string>()
                                 : std::string();
  if (a == b) throw HttpError(400, "bad_request", "a pair needs two distinct records");
  const RecordPair pair = canonical_pair(a, b);

  auto check = [&]() -> std::optional<ApiResult> {
    require_dataset();
    for (const auto& id : {a, b}) {
      if (!records_->position(id)) throw HttpError(404, "not_found", "unknown record \"" + id + "\"");
    }
    for (const auto& r : rules_) {
      if (r.pair == pair) {
        const bool separated = partition_->entity_of(a) != partition_->entity_of(b);
        return ApiResult{200, {{"separating", separated},
                               {"no_op", true},
                               {"rule", unlink_rule_to_json(r)},
                               {"partition", partition_summary()}}};
      }
    }
    const auto it = std::lower_bound(pairs_.begin(), pairs_.end(), pair,
                                     [](const PairScore& s, const RecordPair& p) { return s.pair < p; });
    if (it == pairs_.end() || !(it->pair == pair) || it->match_class != MatchClass::kMatch) {
      throw HttpError(422, "not_match_edge",
                      "(" + pair.a + ", " + pair.b + ") is not a direct Match edge");
    }
    return std::nullopt;
  };

  {
    std::shared_lock lock(state_mutex_);
    if (auto done = check()) return *done;
  }
  MutationGuard guard(mutating_);
  std::unique_lock lock(state_mutex_);
  if (auto done = check()) return *done;

  const UnlinkRule rule{pair, utc_now(), author};
  store_.append_line(artifact::kUnlinks, unlink_rule_to_json(rule).dump());
  rules_.push_back(rule);
  partition_ = link_records(*records_, pairs_, rules_, config_.matcher);
  store_.write(artifact::kPartition, partition_->to_json().dump() + "\n", config_.fingerprint());
  clear_cache();
  const Entity* ea = partition_->entity_of(a);
  const Entity* eb = partition_->entity_of(b);
  return {200,
          {{"separating", ea != eb},
           {"no_op", false},
           {"rule", unlink_rule_to_json(rule)},
           {"entity_a", ea->entity_id},
           {"entity_b", eb->entity_id},
           {"partition", partition_summary()}}};
}

ApiResult XemService::record(std::string_view id) const {
  std::shared_lock lock(state_mutex_);
  require_dataset();
  const auto pos = records_->position(id);
  if (!pos) throw HttpError(404, "not_found", "unknown record \"" + std::string(id) + "\"");
  const Record& r = (*records_)[*pos];
  json values = json::object();
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    values[records_->schema()[i].name] = r.values[i] ? json(*r.values[i]) : json(nullptr);
  }
  const Entity* e = partition_->entity_of(id);
  return {200,
          {{"record_id", r.record_id},
           {"source_id", r.source_id},
           {"values", values},
           {"entity_id", e ? json(e->entity_id) : json(nullptr)}}};
}

ApiResult XemService::query_records(std::string_view attribute, std::string_view contains,
                                    std::size_t limit) const {
  std::shared_lock lock(state_mutex_);
  require_dataset();
  const auto idx = records_->schema().index_of(attribute);
  if (!idx) throw HttpError(400, "bad_request", "unknown attribute \"" + std::string(attribute) + "\"");
  const auto needle = normalize_value(contains);
  json items = json::array();
  std::size_t total = 0;
  for (const auto& r : records_->records()) {
    const auto& v = r.values[*idx];
    if (!v) continue;
    if (needle && v->find(*needle) == std::string::npos) continue;
    ++total;
    if (items.size() < limit) items.push_back({{"record_id", r.record_id}, {"value", *v}});
  }
  return {200, {{"items", items}, {"total", total}}};
}

std::optional<Partition> XemService::partition() const {
  std::shared_lock lock(state_mutex_);
  return partition_;
}

std::vector<PairScore> XemService::pair_scores() const {
  std::shared_lock lock(state_mutex_);
  return pairs_;
}

std::vector<UnlinkRule> XemService::unlink_rules() const {
  std::shared_lock lock(state_mutex_);
  return rules_;
}

std::optional<RecordSet> XemService::records() const {
  std::shared_lock lock(state_mutex_);
  return records_;
}

XemConfig XemService::config() const {
  std::shared_lock lock(state_mutex_);
  return config_;
}

namespace {

void send(httplib::Response& res, const ApiResult& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      send(res, f(req));
    } catch (const HttpError& e) {
      send(res, {e.status(), error_body(e.code(), e.what())});
    } catch (const Error& e) {
      send(res, {http_status_for(e.code()), error_body(error_code_name(e.code()), e.what())});
    } catch (const json::exception& e) {
      send(res, {400, error_body("bad_request", e.what())});
    } catch (const std::exception& e) {
      send(res, {500, error_body("internal", e.what())});
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw HttpError(400, "bad_request", std::string("malformed json body: ") + e.what());
  }
}

std::optional<json> optional_json_field(const httplib::Request& req, const char* key) {
  if (!req.has_file(key)) return std::nullopt;
  try {
    return json::parse(req.get_file_value(key).content);
  } catch (const json::parse_error& e) {
    throw HttpError(400, "bad_request", std::string(key) + " is not valid json: " + e.what());
  }
}

}  // namespace

void mount_routes(httplib::Server& server, XemService& service) {
  server.Get("/health", guarded([&](const httplib::Request&) { return ApiResult{200, service.health()}; }));
  server.Get("/status", guarded([&](const httplib::Request&) { return ApiResult{200, service.status()}; }));

  server.Post("/datasets", guarded([&](const httplib::Request& req) {
    if (!req.is_multipart_form_data() || !req.has_file("records")) {
      throw HttpError(400, "bad_request", "multipart field \"records\" is required");
    }
    const auto records = req.get_file_value("records");
    std::string format = req.has_file("format") ? req.get_file_value("format").content : "";
    if (format.empty()) {
      const auto& name = records.filename;
      format = name.size() >= 4 && name.compare(name.size() - 4, 4, ".csv") == 0 ? "csv" : "jsonl";
    }
    if (format != "csv" && format != "jsonl") {
      throw HttpError(400, "bad_request", "format must be csv or jsonl");
    }
    return service.ingest(records.content, format == "csv" ? RecordFormat::kCsv : RecordFormat::kJsonl,
                          optional_json_field(req, "config"), optional_json_field(req, "schema"));
  }));

  server.Post("/jobs/:kind", guarded([&](const httplib::Request& req) {
    return service.start_job(req.path_params.at("kind"));
  }));
  server.Get("/jobs/:id", guarded([&](const httplib::Request& req) {
    return service.job(req.path_params.at("id"));
  }));

  server.Get("/entities", guarded([&](const httplib::Request& req) {
    EntityQuery q;
    q.limit = 50;
    if (req.has_param("min_size")) q.min_size = parse_size(req.get_param_value("min_size"), "min_size");
    if (req.has_param("limit")) q.limit = parse_size(req.get_param_value("limit"), "limit");
    if (req.has_param("sort")) q.sort = req.get_param_value("sort");
    if (req.has_param("page_token")) q.page_token = req.get_param_value("page_token");
    return service.list_entities(q);
  }));
  server.Get("/entities/:id", guarded([&](const httplib::Request& req) {
    return service.entity(req.path_params.at("id"));
  }));
  server.Post("/entities/:id/report", guarded([&](const httplib::Request& req) {
    return service.report(req.path_params.at("id"));
  }));

  server.Post("/explain", guarded([&](const httplib::Request& req) { return service.explain(parse_body(req)); }));
  server.Post("/unlink", guarded([&](const httplib::Request& req) { return service.unlink(parse_body(req)); }));

  server.Get("/records/:id", guarded([&](const httplib::Request& req) {
    return service.record(req.path_params.at("id"));
  }));
  server.Get("/records", guarded([&](const httplib::Request& req) {
    if (!req.has_param("attr")) throw HttpError(400, "bad_request", "query parameter attr is required");
    const std::size_t limit = req.has_param("limit") ? parse_size(req.get_param_value("limit"), "limit") : 100;
    return service.query_records(req.get_param_value("attr"), req.get_param_value("contains"), limit);
  }));
}

std::pair<std::string, int> parse_address(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kConfig, "address must be host:port, got \"" + std::string(address) + "\"");
  }
  int port = 0;
  const auto digits = address.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw Error(ErrorCode::kConfig, "bad port in \"" + std::string(address) + "\"");
  }
  return {std::string(address.substr(0, colon)), port};
}

void serve(const ServiceOptions& options, const std::string& host, int port) {
  XemService service(options);
  httplib::Server server;
  mount_routes(server, service);
  if (!server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }
  server.listen_after_bind();
}

}  // namespace xem
