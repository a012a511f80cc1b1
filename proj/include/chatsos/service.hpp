#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "chatsos/agent.hpp"
#include "chatsos/config.hpp"
#include "chatsos/corpus.hpp"
#include "chatsos/error.hpp"
#include "chatsos/evaluation.hpp"
#include "chatsos/json_util.hpp"
#include "chatsos/llm.hpp"
#include "chatsos/ngram.hpp"
#include "chatsos/prompt.hpp"
#include "chatsos/remote_embedder.hpp"
#include "chatsos/snapshot.hpp"
#include "chatsos/store.hpp"
#include "chatsos/tsne.hpp"
#include "chatsos/utf8.hpp"

namespace chatsos {

struct HttpResult {
  int status = 200;
  Json body;
};

inline HttpResult error_result(ErrorKind kind, const std::string& message, Json details = nullptr) {
  Json body = {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}};
  if (!details.is_null()) body["error"]["details"] = std::move(details);
  return {http_status(kind), std::move(body)};
}

inline std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg,
                                               const http::RetryPolicy& retry) {
  if (cfg.kind == EmbedderKind::kRemote) return std::make_unique<RemoteEmbedder>(cfg, retry);
  return std::make_unique<LocalEmbedder>(cfg.dim, cfg.seed);
}

/// Stands in when the mock has nothing to train on yet.
class UnavailableBackend final : public LlmBackend {
 public:
  explicit UnavailableBackend(std::string reason) : reason_(std::move(reason)) {}
  std::string id() const override { return "unavailable"; }
  std::string complete(const PromptView&, const CompletionParams&) const override {
    throw Error(ErrorKind::kBackendUnavailable, reason_);
  }

 private:
  std::string reason_;
};

inline std::shared_ptr<const LlmBackend> make_backend(const ServiceConfig& cfg,
                                                      const KnowledgeStore& store) {
  const BackendConfig& b = cfg.backend;
  if (b.kind == BackendKind::kRemoteChat) {
    return std::make_shared<RemoteChatBackend>(b.remote, cfg.retry);
  }
  if (!b.model_path.empty()) {
    return std::make_shared<NgramMockBackend>(NgramModel::load(b.model_path), b.generate);
  }
  std::vector<TokenSeq> sequences;
  if (!b.corpus.empty()) {
    for (const auto& line : b.corpus) sequences.push_back(tokenize(line));
  } else {
    for (const auto& r : store.records()) sequences.push_back(tokenize(r.text));
  }
  std::erase_if(sequences, [](const TokenSeq& s) { return s.empty(); });
  if (sequences.empty()) {
    return std::make_shared<UnavailableBackend>("mock backend has no training text; ingest a corpus first");
  }
  return std::make_shared<NgramMockBackend>(NgramModel::train(sequences, b.order, b.alpha),
                                            b.generate);
}

/// Request handlers behind the HTTP API. Handlers are pure functions of the
/// request and the shared state; the transport only maps them to routes.
class Service {
 public:
  explicit Service(ServiceConfig config)
      : config_(std::move(config)),
        embedder_(make_embedder(config_.embedder, config_.retry)),
        registry_(TemplateRegistry::with_builtins()),
        store_(embedder_->dim()) {
    if (!config_.templates_dir.empty()) registry_.load_directory(config_.templates_dir);
    if (!config_.store_path.empty() && std::filesystem::exists(config_.store_path)) {
      KnowledgeStore loaded = snapshot_load(config_.store_path);
      if (loaded.dim() != embedder_->dim()) {
        throw Error(ErrorKind::kConfiguration,
                    "snapshot dim " + std::to_string(loaded.dim()) + " does not match embedder dim " +
                        std::to_string(embedder_->dim()));
      }
      store_ = std::move(loaded);
      spdlog::info("loaded {} chunks from {}", store_.size(), config_.store_path);
    }
    backend_ = make_backend(config_, store_);
  }

  const ServiceConfig& config() const noexcept { return config_; }
  const KnowledgeStore& store() const noexcept { return store_; }
  const Embedder& embedder() const noexcept { return *embedder_; }

  std::string backend_id() const { return backend()->id(); }

  AnswerEnvelope ask(const AskRequest& req) const {
    const auto b = backend();
    const Agent agent(store_, *embedder_, registry_, *b, config_.agent);
    return agent.answer(req);
  }

  /// Ingests documents, persists the store if anything was added, and
  /// retrains a store-backed mock.
  IngestReport ingest(const std::vector<SourceDocument>& docs) {
    std::lock_guard lock(ingest_mutex_);
    IngestReport report = ingest_pipeline(docs, config_.chunk, *embedder_, store_);
    if (report.docs_accepted > 0) {
      if (!config_.store_path.empty()) snapshot_save(store_, config_.store_path);
      if (config_.backend.kind == BackendKind::kNgramMock && config_.backend.model_path.empty() &&
          config_.backend.corpus.empty()) {
        auto fresh = make_backend(config_, store_);
        std::lock_guard guard(backend_mutex_);
        backend_ = std::move(fresh);
      }
    }
    spdlog::info("ingest: {} accepted, {} rejected, {} chunks", report.docs_accepted,
                 report.docs_rejected, report.chunks_created);
    return report;
  }

  tsne::ProjectionResult project(const tsne::Params& params, std::vector<ChunkRecord>* records) const {
    std::vector<ChunkRecord> recs;
    tsne::Rows rows;
    store_.read([&](const VectorIndex& index, const RecordStore& store) {
      for (const auto& [id, r] : store.records()) {
        const auto v = index.find(id);
        recs.push_back(r);
        rows.emplace_back(v.begin(), v.end());
      }
    });
    auto result = tsne::tsne_embed(rows, params);
    if (records) *records = std::move(recs);
    return result;
  }

  HttpResult handle_healthz() const { return {200, {{"status", "ok"}}}; }

  HttpResult handle_ask(std::string_view body) const {
    AskRequest req;
    try {
      req = parse_ask(body);
    } catch (const Error& e) {
      return error_result(e.kind(), e.what());
    }
    const AnswerEnvelope env = ask(req);
    const int status = env.error ? http_status(env.error->kind) : 200;
    return {status, to_json(env)};
  }

  HttpResult handle_ingest(std::string_view body) {
    std::vector<SourceDocument> docs;
    try {
      docs = parse_ingest_body(body);
    } catch (const Error& e) {
      return error_result(e.kind(), e.what());
    }
    IngestReport report;
    try {
      report = ingest(docs);
    } catch (const Error& e) {
      return error_result(e.kind(), e.what());
    }
    int status = 200;
    if (!report.errors.empty()) {
      status = http_status(report.errors.front().kind);
      for (const auto& err : report.errors) {
        if (err.kind == ErrorKind::kUniqueness) status = http_status(ErrorKind::kUniqueness);
      }
      if (report.docs_accepted > 0 && status != http_status(ErrorKind::kUniqueness)) status = 200;
    }
    return {status, to_json(report)};
  }

  HttpResult handle_search(const std::string& query, std::optional<std::size_t> k,
                           std::optional<double> threshold) const {
    try {
      if (query.empty()) throw Error(ErrorKind::kValidation, "query must not be empty");
      const double t = threshold.value_or(config_.agent.threshold);
      if (!(t >= -1.0 && t <= 1.0)) {
        throw Error(ErrorKind::kValidation, "threshold must lie in [-1, 1]");
      }
      const auto hits = store_.search_top_k(embedder_->embed_one(query),
                                            k.value_or(config_.agent.k), t);
      Json out = Json::array();
      for (const auto& h : hits) {
        const ChunkRecord rec = store_.get_chunk(h.chunk_id);
        out.push_back({{"chunk_id", to_string(h.chunk_id)},
                       {"similarity", h.similarity},
                       {"rank", h.rank},
                       {"doc_id", rec.doc_id},
                       {"seq", rec.seq},
                       {"excerpt", utf8::prefix(rec.text, 200)}});
      }
      return {200, {{"hits", out}}};
    } catch (const Error& e) {
      return error_result(e.kind(), e.what());
    }
  }

  HttpResult handle_projection(std::optional<double> perplexity, std::optional<std::size_t> iters,
                               std::optional<std::uint64_t> seed) const {
    tsne::Params params = config_.projection;
    if (perplexity) params.perplexity = *perplexity;
    if (iters) params.iters = *iters;
    if (seed) params.seed = *seed;
    try {
      std::vector<ChunkRecord> records;
      const auto result = project(params, &records);
      return {200, projection_json(result, records, params)};
    } catch (const Error& e) {
      return error_result(e.kind(), e.what());
    }
  }

  HttpResult handle_eval(std::string_view body) const {
    try {
      const Json j = parse_body(body);
      eval::RubricWeights weights;
      Json cards_json = j;
      if (j.is_object()) {
        if (!j.contains("cards")) throw Error(ErrorKind::kSchema, "body needs a \"cards\" array");
        cards_json = j["cards"];
        if (j.contains("weights")) {
          if (!j["weights"].is_array() || j["weights"].size() != eval::kCriteria) {
            throw Error(ErrorKind::kSchema, "\"weights\" must be an array of 5 numbers");
          }
          for (std::size_t i = 0; i < eval::kCriteria; ++i) {
            if (!j["weights"][i].is_number()) {
              throw Error(ErrorKind::kSchema, "\"weights\" must be an array of 5 numbers");
            }
            weights.w[i] = j["weights"][i].get<double>();
          }
        }
      }
      const auto cards = eval::cards_from_json(cards_json);
      Json violations = Json::array();
      Json warnings = Json::array();
      for (std::size_t i = 0; i < cards.size(); ++i) {
        const auto v = eval::validate_scorecard(cards[i], weights);
        for (const auto& bad : v.violations) {
          violations.push_back({{"card", i}, {"field", bad.field}, {"message", bad.message}});
        }
        for (const auto& w : v.warnings) warnings.push_back({{"card", i}, {"message", w}});
      }
      if (!violations.empty()) {
        return error_result(ErrorKind::kValidation, "invalid score cards", violations);
      }
      const auto report = eval::compare_reports(cards, weights);
      Json out = eval::to_json(report);
      out["warnings"] = warnings;
      out["table"] = eval::to_table(report);
      return {200, out};
    } catch (const Error& e) {
      return error_result(e.kind(), e.what());
    }
  }

  static Json projection_json(const tsne::ProjectionResult& result,
                              const std::vector<ChunkRecord>& records, const tsne::Params& params) {
    Json points = Json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
      points.push_back({{"chunk_id", to_string(records[i].chunk_id)},
                        {"x", result.points[i].x},
                        {"y", result.points[i].y},
                        {"doc_id", records[i].doc_id},
                        {"excerpt", utf8::prefix(records[i].text, 200)}});
    }
    return {{"header",
             {{"n", records.size()},
              {"perplexity", result.perplexity},
              {"iters", result.iterations},
              {"kl", result.kl},
              {"seed", params.seed}}},
            {"points", points},
            {"warnings", result.warnings}};
  }

  static Json parse_body(std::string_view body) {
    try {
      return Json::parse(body);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::kParse, std::string("request body is not JSON: ") + e.what());
    }
  }

  static AskRequest parse_ask(std::string_view body) {
    const Json j = parse_body(body);
    if (!j.is_object()) throw Error(ErrorKind::kValidation, "request body must be a JSON object");
    AskRequest req;
    if (!j.contains("query") || !j["query"].is_string()) {
      throw Error(ErrorKind::kValidation, "\"query\" must be a non-empty string");
    }
    req.query = j["query"].get<std::string>();
    if (normalize_text(req.query).empty()) {
      throw Error(ErrorKind::kValidation, "\"query\" must be a non-empty string");
    }
    if (j.contains("scenario") && !j["scenario"].is_null()) {
      if (!j["scenario"].is_string()) throw Error(ErrorKind::kValidation, "\"scenario\" must be a string");
      req.scenario = parse_scenario(j["scenario"].get<std::string>());
    }
    if (j.contains("k") && !j["k"].is_null()) {
      if (!j["k"].is_number_integer() || j["k"].get<long long>() < 1) {
        throw Error(ErrorKind::kValidation, "\"k\" must be a positive integer");
      }
      req.k = j["k"].get<std::size_t>();
    }
    if (j.contains("threshold") && !j["threshold"].is_null()) {
      if (!j["threshold"].is_number()) throw Error(ErrorKind::kValidation, "\"threshold\" must be a number");
      const double t = j["threshold"].get<double>();
      if (!(t >= -1.0 && t <= 1.0)) throw Error(ErrorKind::kValidation, "\"threshold\" must lie in [-1, 1]");
      req.threshold = t;
    }
    if (j.contains("history") && !j["history"].is_null()) {
      if (!j["history"].is_array()) throw Error(ErrorKind::kValidation, "\"history\" must be an array");
      for (const auto& turn : j["history"]) {
        if (!turn.is_object() || !turn.contains("role") || !turn["role"].is_string() ||
            !turn.contains("content") || !turn["content"].is_string()) {
          throw Error(ErrorKind::kValidation, "history turns need string \"role\" and \"content\"");
        }
        const auto role = turn["role"].get<std::string>();
        if (role != "user" && role != "assistant") {
          throw Error(ErrorKind::kValidation, "history role must be \"user\" or \"assistant\"");
        }
        req.history.push_back({role, turn["content"].get<std::string>()});
      }
    }
    return req;
  }

  /// A JSONL corpus, or {"path": "..."} naming a corpus file.
  static std::vector<SourceDocument> parse_ingest_body(std::string_view body) {
    const auto first = body.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && body[first] == '{' &&
        body.find('\n', first) == std::string_view::npos) {
      Json j;
      try {
        j = Json::parse(body);
      } catch (const Json::parse_error&) {
        j = nullptr;
      }
      if (j.is_object() && j.contains("path") && !j.contains("doc_id")) {
        if (!j["path"].is_string()) throw Error(ErrorKind::kValidation, "\"path\" must be a string");
        return parse_corpus_file(binio::read_file(j["path"].get<std::string>()));
      }
    }
    return parse_corpus_file(body);
  }

 private:
  std::shared_ptr<const LlmBackend> backend() const {
    std::lock_guard guard(backend_mutex_);
    return backend_;
  }

  ServiceConfig config_;
  std::unique_ptr<Embedder> embedder_;
  TemplateRegistry registry_;
  KnowledgeStore store_;
  mutable std::mutex backend_mutex_;
  std::shared_ptr<const LlmBackend> backend_;
  std::mutex ingest_mutex_;
};

namespace detail {

inline void reply(httplib::Response& res, const HttpResult& r) {
  res.status = r.status;
  res.set_content(dump_json(r.body), "application/json; charset=utf-8");
}

template <typename T>
std::optional<T> query_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string raw = req.get_param_value(name);
  try {
    std::size_t used = 0;
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
      value = static_cast<T>(std::stod(raw, &used));
    } else {
      const long long v = std::stoll(raw, &used);
      if (v < 0) throw std::out_of_range(raw);
      value = static_cast<T>(v);
    }
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kValidation, std::string("bad value for parameter \"") + name + "\"");
  }
}

}  // namespace detail

/// Registers the API routes on `server`.
inline void mount_routes(httplib::Server& server, Service& service) {
  using detail::reply;
  server.Get("/healthz", [&](const httplib::Request&, httplib::Response& res) {
    reply(res, service.handle_healthz());
  });
  server.Post("/v1/ask", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_ask(req.body));
  });
  server.Post("/v1/ingest", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_ingest(req.body));
  });
  server.Get("/v1/search", [&](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto k = detail::query_param<std::size_t>(req, "k");
      const auto t = detail::query_param<double>(req, "threshold");
      reply(res, service.handle_search(req.get_param_value("q"), k, t));
    } catch (const Error& e) {
      reply(res, error_result(e.kind(), e.what()));
    }
  });
  server.Get("/v1/projection", [&](const httplib::Request& req, httplib::Response& res) {
    try {
      reply(res, service.handle_projection(detail::query_param<double>(req, "perplexity"),
                                           detail::query_param<std::size_t>(req, "iters"),
                                           detail::query_param<std::uint64_t>(req, "seed")));
    } catch (const Error& e) {
      reply(res, error_result(e.kind(), e.what()));
    }
  });
  server.Post("/v1/eval/compare", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_eval(req.body));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                                  std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      reply(res, error_result(e.kind(), e.what()));
    } catch (const std::exception& e) {
      reply(res, error_result(ErrorKind::kInternal, e.what()));
    }
  });
}

/// Blocks serving on the configured host and port.
inline void run_server(Service& service) {
  httplib::Server server;
  mount_routes(server, service);
  const auto& cfg = service.config();
  spdlog::info("listening on {}:{}", cfg.host, cfg.port);
  if (!server.listen(cfg.host, cfg.port)) {
    throw Error(ErrorKind::kIo, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  }
}

}  // namespace chatsos
