// chatsos command-line entry point.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "chatsos/chatsos.hpp"

namespace {

using chatsos::Error;
using chatsos::ErrorKind;
using chatsos::Json;

chatsos::ServiceConfig load(const std::string& path) {
  chatsos::ServiceConfig cfg = path.empty() ? chatsos::config_from_json(Json::object())
                                            : chatsos::load_config(path);
  spdlog::set_level(spdlog::level::from_str(cfg.log_level));
  return cfg;
}

void print(const Json& j) { std::cout << chatsos::dump_json(j, 2) << '\n'; }

int cmd_ingest(const std::string& config, const std::string& corpus) {
  chatsos::Service service(load(config));
  const auto docs = chatsos::parse_corpus_file(chatsos::binio::read_file(corpus));
  const auto report = service.ingest(docs);
  print(chatsos::to_json(report));
  if (report.errors.empty()) return 0;
  for (const auto& e : report.errors) {
    if (e.kind == ErrorKind::kUniqueness) return chatsos::exit_code(e.kind);
  }
  return report.docs_accepted > 0 ? 0 : chatsos::exit_code(report.errors.front().kind);
}

int cmd_ask(const std::string& config, const std::string& query, const std::string& scenario,
            std::optional<std::size_t> k, std::optional<double> threshold) {
  chatsos::Service service(load(config));
  Json body = {{"query", query}};
  if (!scenario.empty()) body["scenario"] = scenario;
  if (k) body["k"] = *k;
  if (threshold) body["threshold"] = *threshold;
  const auto req = chatsos::Service::parse_ask(chatsos::dump_json(body));
  const auto env = service.ask(req);
  print(chatsos::to_json(env));
  return env.error ? chatsos::exit_code(env.error->kind) : 0;
}

int cmd_project(const std::string& config, const std::string& out,
                std::optional<double> perplexity, std::optional<std::size_t> iters,
                std::optional<std::uint64_t> seed) {
  chatsos::Service service(load(config));
  chatsos::tsne::Params params = service.config().projection;
  if (perplexity) params.perplexity = *perplexity;
  if (iters) params.iters = *iters;
  if (seed) params.seed = *seed;
  std::vector<chatsos::ChunkRecord> records;
  const auto result = service.project(params, &records);
  for (const auto& w : result.warnings) spdlog::warn("{}", w);
  const Json doc = chatsos::Service::projection_json(result, records, params);
  chatsos::binio::write_file_atomic(out, chatsos::dump_json(doc, 2) + "\n");
  std::cerr << "wrote " << records.size() << " points to " << out << " (KL " << result.kl << ")\n";
  return 0;
}

int cmd_eval(const std::string& cards_path, bool json_out) {
  Json j;
  try {
    j = Json::parse(chatsos::binio::read_file(cards_path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kParse, cards_path + ": " + e.what());
  }
  const chatsos::eval::RubricWeights weights;
  const auto cards = chatsos::eval::cards_from_json(j);
  for (std::size_t i = 0; i < cards.size(); ++i) {
    const auto v = chatsos::eval::validate_scorecard(cards[i], weights);
    for (const auto& w : v.warnings) spdlog::warn("card {}: {}", i, w);
    if (!v.ok()) {
      throw Error(ErrorKind::kValidation, "card " + std::to_string(i) + ": " + v.violations.front().message);
    }
  }
  const auto report = chatsos::eval::compare_reports(cards, weights);
  if (json_out) {
    print(chatsos::eval::to_json(report));
  } else {
    std::cout << chatsos::eval::to_table(report);
  }
  return 0;
}

int cmd_check(const std::string& config, const std::string& store_path) {
  const auto cfg = load(config);
  const std::string path = store_path.empty() ? cfg.store_path : store_path;
  const auto store = chatsos::snapshot_load(path);
  const auto violations = store.check_integrity();
  for (const auto& v : violations) {
    std::cout << chatsos::to_string(v.chunk_id) << ": " << v.rule << '\n';
  }
  std::cout << path << ": " << store.size() << " chunks, " << violations.size()
            << " integrity violations\n";
  return violations.empty() ? 0 : chatsos::exit_code(ErrorKind::kValidation);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("chatsos"));

  CLI::App app{"Retrieval-augmented question answering over incident reports"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");

  auto* ingest = app.add_subcommand("ingest", "Add a JSONL corpus to the store");
  std::string corpus;
  ingest->add_option("corpus", corpus, "JSONL file")->required();

  auto* ask = app.add_subcommand("ask", "Answer one question and print the envelope");
  std::string query, scenario;
  std::optional<std::size_t> k;
  std::optional<double> threshold;
  ask->add_option("query", query)->required();
  ask->add_option("--scenario", scenario, "Scenario name");
  ask->add_option("--k", k, "Chunks to retrieve");
  ask->add_option("--threshold", threshold, "Minimum cosine similarity");

  auto* project = app.add_subcommand("project", "Write a 2-D map of the stored chunks");
  std::string out = "points.json";
  std::optional<double> perplexity;
  std::optional<std::size_t> iters;
  std::optional<std::uint64_t> seed;
  project->add_option("--out", out, "Output JSON path");
  project->add_option("--perplexity", perplexity);
  project->add_option("--iters", iters);
  project->add_option("--seed", seed);

  auto* eval = app.add_subcommand("eval", "Compare rubric score cards");
  std::string cards;
  bool json_out = false;
  eval->add_option("cards", cards, "JSON array of score cards")->required();
  eval->add_flag("--json", json_out, "Print the report as JSON");

  auto* check = app.add_subcommand("check", "Verify store integrity");
  std::string store_path;
  check->add_option("--store", store_path, "Snapshot file (default: from config)");

  // --config is accepted after the subcommand too.
  for (auto* sub : {serve, ingest, ask, project, check}) {
    sub->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : chatsos::exit_code(ErrorKind::kValidation);
  }

  try {
    if (*serve) {
      chatsos::Service service(load(config));
      chatsos::run_server(service);
      return 0;
    }
    if (*ingest) return cmd_ingest(config, corpus);
    if (*ask) return cmd_ask(config, query, scenario, k, threshold);
    if (*project) return cmd_project(config, out, perplexity, iters, seed);
    if (*eval) return cmd_eval(cards, json_out);
    if (*check) return cmd_check(config, store_path);
  } catch (const Error& e) {
    std::cerr << "error (" << chatsos::to_string(e.kind()) << "): " << e.what() << '\n';
    return chatsos::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return chatsos::exit_code(ErrorKind::kInternal);
  }
  return 0;
}
