#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "chatsos/agent.hpp"
#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"
#include "chatsos/json_util.hpp"
#include "chatsos/llm.hpp"
#include "chatsos/ngram.hpp"
#include "chatsos/remote_embedder.hpp"
#include "chatsos/snapshot.hpp"
#include "chatsos/text.hpp"
#include "chatsos/tsne.hpp"

namespace chatsos {

enum class BackendKind { kRemoteChat, kNgramMock };

struct BackendConfig {
  BackendKind kind = BackendKind::kNgramMock;
  // remote_chat
  RemoteChatConfig remote;
  // ngram_mock: model_path wins, then the inline corpus, then the store's own
  // chunk texts.
  std::string model_path;
  std::vector<std::string> corpus;
  std::size_t order = 3;
  double alpha = 1.0;
  GenerateOptions generate{64, 0, DecodeMode::kGreedy, 1};
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store_path = "chatsos_store.csos";
  std::string templates_dir;
  EmbedderConfig embedder;
  BackendConfig backend;
  AgentOptions agent;
  ChunkPolicy chunk;
  tsne::Params projection;
  std::string log_level = "info";
  http::RetryPolicy retry;

  void validate() const {
    if (agent.k < 1) throw Error(ErrorKind::kValidation, "retrieval.k must be >= 1");
    if (!(agent.threshold >= -1.0 && agent.threshold <= 1.0)) {
      throw Error(ErrorKind::kValidation, "retrieval.threshold must lie in [-1, 1]");
    }
    if (agent.knowledge_budget == 0) {
      throw Error(ErrorKind::kValidation, "knowledge_budget must be positive");
    }
    if (embedder.dim == 0) throw Error(ErrorKind::kValidation, "embedder.dim must be positive");
    chunk.validate();
    if (port < 0 || port > 65535) throw Error(ErrorKind::kValidation, "listen.port out of range");
    if (retry.max_retries < 0) throw Error(ErrorKind::kValidation, "retry.max_retries must be >= 0");
    if (embedder.timeout.count() <= 0 || backend.remote.timeout.count() <= 0) {
      throw Error(ErrorKind::kValidation, "timeout_ms must be positive");
    }
  }
};

namespace detail {

template <typename T>
void read_opt(const Json& obj, const char* key, T& out) {
  if (!obj.is_object() || !obj.contains(key) || obj[key].is_null()) return;
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    const Json& v = obj[key];
    if (!v.is_number_integer() ||
        (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw Error(ErrorKind::kSchema, std::string("config field \"") + key + "\" must be a" +
                                          (std::is_unsigned_v<T> ? " non-negative" : "n") +
                                          " integer");
    }
  }
  try {
    out = obj[key].get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("config field \"") + key + "\": " + e.what());
  }
}

inline std::chrono::milliseconds read_ms(const Json& obj, const char* key,
                                         std::chrono::milliseconds fallback) {
  long long ms = fallback.count();
  read_opt(obj, key, ms);
  return std::chrono::milliseconds(ms);
}

inline const Json& section(const Json& root, const char* key) {
  static const Json kEmpty = Json::object();
  if (!root.contains(key)) return kEmpty;
  if (!root[key].is_object()) {
    throw Error(ErrorKind::kSchema, std::string("config section \"") + key + "\" must be an object");
  }
  return root[key];
}

}  // namespace detail

/// Builds a config from JSON; absent keys keep their defaults. The
/// CHATSOS_EMBED_KEY and CHATSOS_LLM_KEY environment variables override the
/// token fields.
inline ServiceConfig config_from_json(const Json& root) {
  if (!root.is_object()) throw Error(ErrorKind::kSchema, "config must be a JSON object");
  using detail::read_opt;
  ServiceConfig c;
  const Json& listen = detail::section(root, "listen");
  read_opt(listen, "host", c.host);
  read_opt(listen, "port", c.port);
  read_opt(root, "store_path", c.store_path);
  read_opt(root, "templates_dir", c.templates_dir);
  read_opt(root, "log_level", c.log_level);

  const Json& emb = detail::section(root, "embedder");
  std::string kind = "local";
  read_opt(emb, "kind", kind);
  if (kind == "local") {
    c.embedder.kind = EmbedderKind::kLocal;
  } else if (kind == "remote") {
    c.embedder.kind = EmbedderKind::kRemote;
  } else {
    throw Error(ErrorKind::kValidation, "embedder.kind must be \"local\" or \"remote\"");
  }
  read_opt(emb, "dim", c.embedder.dim);
  read_opt(emb, "seed", c.embedder.seed);
  read_opt(emb, "endpoint_url", c.embedder.endpoint_url);
  read_opt(emb, "model_name", c.embedder.model_name);
  read_opt(emb, "auth_token", c.embedder.auth_token);
  read_opt(emb, "max_batch", c.embedder.max_batch);
  c.embedder.timeout = detail::read_ms(emb, "timeout_ms", c.embedder.timeout);

  const Json& be = detail::section(root, "backend");
  kind = "ngram_mock";
  read_opt(be, "kind", kind);
  if (kind == "ngram_mock") {
    c.backend.kind = BackendKind::kNgramMock;
  } else if (kind == "remote_chat") {
    c.backend.kind = BackendKind::kRemoteChat;
  } else {
    throw Error(ErrorKind::kValidation, "backend.kind must be \"ngram_mock\" or \"remote_chat\"");
  }
  read_opt(be, "endpoint_url", c.backend.remote.endpoint_url);
  read_opt(be, "model_name", c.backend.remote.model_name);
  read_opt(be, "auth_token", c.backend.remote.auth_token);
  c.backend.remote.timeout = detail::read_ms(be, "timeout_ms", c.backend.remote.timeout);
  read_opt(be, "temperature", c.agent.temperature);
  read_opt(be, "max_tokens", c.agent.max_tokens);
  read_opt(be, "model_path", c.backend.model_path);
  read_opt(be, "corpus", c.backend.corpus);
  read_opt(be, "order", c.backend.order);
  read_opt(be, "alpha", c.backend.alpha);
  read_opt(be, "seed", c.backend.generate.seed);
  read_opt(be, "max_len", c.backend.generate.max_len);
  read_opt(be, "min_len", c.backend.generate.min_len);
  std::string mode = "greedy";
  read_opt(be, "mode", mode);
  if (mode == "greedy") {
    c.backend.generate.mode = DecodeMode::kGreedy;
  } else if (mode == "sample") {
    c.backend.generate.mode = DecodeMode::kSample;
  } else {
    throw Error(ErrorKind::kValidation, "backend.mode must be \"greedy\" or \"sample\"");
  }

  const Json& retrieval = detail::section(root, "retrieval");
  read_opt(retrieval, "k", c.agent.k);
  read_opt(retrieval, "threshold", c.agent.threshold);
  read_opt(root, "knowledge_budget", c.agent.knowledge_budget);
  read_opt(root, "answer_without_knowledge", c.agent.answer_without_knowledge);
  read_opt(root, "insufficiency_message", c.agent.insufficiency_message);

  const Json& chunk = detail::section(root, "chunk");
  read_opt(chunk, "size", c.chunk.chunk_size);
  read_opt(chunk, "overlap", c.chunk.overlap);

  const Json& proj = detail::section(root, "projection");
  read_opt(proj, "perplexity", c.projection.perplexity);
  read_opt(proj, "iters", c.projection.iters);
  read_opt(proj, "seed", c.projection.seed);
  read_opt(proj, "learning_rate", c.projection.learning_rate);

  const Json& retry = detail::section(root, "retry");
  read_opt(retry, "max_retries", c.retry.max_retries);
  c.retry.base_delay = detail::read_ms(retry, "base_delay_ms", c.retry.base_delay);

  if (const char* key = std::getenv(kEmbedKeyEnv)) c.embedder.auth_token = key;
  if (const char* key = std::getenv(kLlmKeyEnv)) c.backend.remote.auth_token = key;
  c.validate();
  return c;
}

inline ServiceConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(binio::read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace chatsos
