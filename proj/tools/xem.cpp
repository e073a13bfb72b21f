#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xem/config.hpp"
#include "xem/error.hpp"
#include "xem/evalharness.hpp"
#include "xem/explainers.hpp"
#include "xem/pipeline.hpp"
#include "xem/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string dir = ".";
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;

  xem::XemConfig resolve(const xem::ArtifactStore& store) const {
    std::optional<fs::path> path;
    if (!config.empty()) path = config;
    return xem::resolve_config(store, path, seed);
  }
};

void add_common(CLI::App* cmd, Common& c, bool with_force = true) {
  cmd->add_option("-d,--dir,--out", c.dir, "Artifact directory")->capture_default_str();
  cmd->add_option("-c,--config", c.config, "JSON config file (default: the directory's config.json)");
  cmd->add_option("--seed", c.seed, "Seed for every random draw");
  if (with_force) cmd->add_flag("--force", c.force, "Accept artifacts produced under another config");
}

void print(const json& j) { std::cout << j.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xem: explainable entity matching"};
  app.require_subcommand(1);
  Common c;

  auto* generate = app.add_subcommand("generate", "Write a synthetic corpus and its gold clusters");
  add_common(generate, c, false);

  auto* ingest = app.add_subcommand("ingest", "Load a CSV or JSON-lines file as the run's records");
  add_common(ingest, c, false);
  std::string input, format;
  ingest->add_option("-i,--input", input, "Records file")->required();
  ingest->add_option("--format", format, "csv or jsonl (default: from the extension)");

  auto* match = app.add_subcommand("match", "Score candidate pairs");
  add_common(match, c);
  auto* link = app.add_subcommand("link", "Link Match pairs into entities");
  add_common(link, c);
  auto* train = app.add_subcommand("train-proxy", "Train the graph proxy on the engine's labels");
  add_common(train, c);

  auto* explain = app.add_subcommand("explain", "Explain a pair or every member of an entity");
  add_common(explain, c);
  std::vector<std::string> pair;
  std::string entity_id;
  auto* pair_opt = explain->add_option("--pair", pair, "Two record ids")->expected(2);
  auto* entity_opt = explain->add_option("--entity", entity_id, "Entity id");
  pair_opt->excludes(entity_opt);

  auto* report = app.add_subcommand("report", "Tabular explanation of one entity");
  add_common(report, c);
  std::string report_entity;
  bool csv = false;
  report->add_option("--entity", report_entity, "Entity id")->required();
  report->add_flag("--csv", csv, "CSV instead of JSON");

  auto* eval = app.add_subcommand("eval", "Pairwise precision, recall and F1 against gold");
  add_common(eval, c);

  auto* serve = app.add_subcommand("serve", "Serve the REST API");
  std::string addr, data_dir;
  std::string serve_config;
  std::optional<std::uint64_t> serve_seed;
  serve->add_option("--addr", addr, "host:port (env XEM_ADDR, default 127.0.0.1:8080)");
  serve->add_option("--data-dir", data_dir, "Data directory (env XEM_DATA_DIR, default xem-data)");
  serve->add_option("-c,--config", serve_config, "Config used when the data directory has none");
  serve->add_option("--seed", serve_seed, "Seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      if (addr.empty()) addr = std::getenv("XEM_ADDR") ? std::getenv("XEM_ADDR") : "127.0.0.1:8080";
      if (data_dir.empty()) {
        data_dir = std::getenv("XEM_DATA_DIR") ? std::getenv("XEM_DATA_DIR") : "xem-data";
      }
      xem::ServiceOptions opts;
      opts.data_dir = data_dir;
      if (!serve_config.empty()) opts.config_path = serve_config;
      opts.seed = serve_seed;
      const auto [host, port] = xem::parse_address(addr);
      std::cerr << "listening on " << host << ":" << port << std::endl;
      xem::serve(opts, host, port);
      return 0;
    }

    xem::ArtifactStore store(c.dir);
    const xem::XemConfig cfg = c.resolve(store);

    if (*generate) {
      const auto data = xem::stage_generate(cfg, store);
      print({{"records", data.records.size()}, {"config_fingerprint", cfg.fingerprint()}});
    } else if (*ingest) {
      if (format.empty()) format = fs::path(input).extension() == ".csv" ? "csv" : "jsonl";
      if (format != "csv" && format != "jsonl") {
        throw xem::Error(xem::ErrorCode::kConfig, "format must be csv or jsonl");
      }
      const auto parsed = xem::parse_records(xem::read_file(input),
                                             format == "csv" ? xem::RecordFormat::kCsv : xem::RecordFormat::kJsonl,
                                             cfg.schema);
      json rejected = json::array();
      for (const auto& r : parsed.rejected) rejected.push_back({{"line", r.line}, {"message", r.message}});
      const std::string fp = cfg.fingerprint();
      store.write(xem::artifact::kConfig, cfg.to_json().dump(2) + "\n", fp);
      store.write(xem::artifact::kRecords, xem::serialize_records(parsed.records, xem::RecordFormat::kJsonl), fp);
      print({{"records", parsed.records.size()}, {"rejected", rejected}});
    } else if (*match) {
      const auto run = xem::stage_match(cfg, store, c.force);
      std::size_t matches = 0;
      for (const auto& s : run.scores) matches += s.match_class == xem::MatchClass::kMatch ? 1 : 0;
      print({{"pairs", run.scores.size()}, {"match_pairs", matches}, {"skipped_blocks", run.skipped_blocks}});
    } else if (*link) {
      const auto p = xem::stage_link(cfg, store, c.force);
      print({{"entities", p.entities().size()},
             {"records", p.record_count()},
             {"non_separating_unlinks", p.non_separating_rules().size()}});
    } else if (*train) {
      print(xem::stage_train(cfg, store, c.force).to_json());
    } else if (*eval) {
      const auto r = xem::stage_eval(cfg, store, c.force);
      print(r.to_json(cfg.fingerprint()));
    } else if (*explain || *report) {
      if (*explain && pair.empty() && entity_id.empty()) {
        throw xem::Error(xem::ErrorCode::kConfig, "explain needs --pair a b or --entity id");
      }
      const std::string fp = cfg.fingerprint();
      const auto proxy = xem::load_proxy(store, cfg);
      store.check_fingerprint(xem::artifact::kModel, fp, c.force);
      const auto records = xem::load_records(store, cfg);
      if (*explain && !pair.empty()) {
        const auto mask = xem::explain_pair_mask(proxy.params, proxy.graph, pair[0], pair[1], cfg.explain.mask);
        const auto attr = xem::attribute_contributions(xem::engine_scorer(cfg.schema, cfg.matcher),
                                                       records.at(pair[0]), records.at(pair[1]), cfg.schema,
                                                       cfg.explain.attribution);
        json out = mask.to_json();
        out.erase("activation");
        out["attribution"] = attr.to_json();
        print(out);
      } else {
        const std::string id = *explain ? entity_id : report_entity;
        const auto partition = xem::load_partition(store);
        const xem::Entity* e = partition.find(id);
        if (e == nullptr) throw xem::Error(xem::ErrorCode::kLookup, "unknown entity \"" + id + "\"");
        const auto r = xem::build_explanation_report(*e, records, xem::load_pairs(store), xem::load_unlinks(store),
                                                     proxy.params, proxy.graph, cfg.matcher, cfg.explain);
        if (csv) {
          std::cout << r.to_csv(cfg.schema);
        } else {
          print(r.to_json());
        }
      }
    }
  } catch (const xem::Error& e) {
    std::cerr << xem::error_body(xem::error_code_name(e.code()), e.what()).dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << xem::error_body("internal", e.what()).dump() << std::endl;
    return 1;
  }
  return 0;
}
