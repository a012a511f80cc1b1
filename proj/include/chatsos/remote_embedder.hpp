#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"
#include "chatsos/http.hpp"
#include "chatsos/json_util.hpp"

namespace chatsos {

inline constexpr const char* kEmbedKeyEnv = "CHATSOS_EMBED_KEY";

/// Parses an embeddings-API response body into vectors ordered by "index".
/// Vectors are re-normalized locally.
inline std::vector<EmbeddingVector> parse_embedding_response(const std::string& body,
                                                             std::size_t expected_count,
                                                             std::size_t expected_dim) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kProtocol, std::string("embedding response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array()) {
    throw Error(ErrorKind::kProtocol, "embedding response has no \"data\" array");
  }
  const auto& data = doc["data"];
  if (data.size() != expected_count) {
    throw Error(ErrorKind::kProtocol, "embedding response has " + std::to_string(data.size()) +
                                          " items, expected " + std::to_string(expected_count));
  }
  std::vector<std::vector<float>> raw(expected_count);
  std::vector<bool> seen(expected_count, false);
  std::size_t response_dim = 0;
  for (std::size_t pos = 0; pos < data.size(); ++pos) {
    const auto& item = data[pos];
    if (!item.is_object() || !item.contains("embedding") || !item["embedding"].is_array()) {
      throw Error(ErrorKind::kProtocol, "embedding item without \"embedding\" array");
    }
    std::size_t index = pos;
    if (item.contains("index")) {
      if (!item["index"].is_number_integer()) {
        throw Error(ErrorKind::kProtocol, "embedding item \"index\" is not an integer");
      }
      const auto i = item["index"].get<long long>();
      if (i < 0 || static_cast<std::size_t>(i) >= expected_count) {
        throw Error(ErrorKind::kProtocol, "embedding item index out of range");
      }
      index = static_cast<std::size_t>(i);
    }
    if (seen[index]) throw Error(ErrorKind::kProtocol, "duplicate embedding index");
    seen[index] = true;
    std::vector<float> values;
    values.reserve(item["embedding"].size());
    for (const auto& v : item["embedding"]) {
      if (!v.is_number()) throw Error(ErrorKind::kProtocol, "embedding value is not a number");
      values.push_back(v.get<float>());
    }
    if (pos == 0) {
      response_dim = values.size();
    } else if (values.size() != response_dim) {
      throw Error(ErrorKind::kProtocol,
                  "inconsistent embedding dimensions in one response: " +
                      std::to_string(response_dim) + " and " + std::to_string(values.size()));
    }
    raw[index] = std::move(values);
  }
  if (response_dim != expected_dim) {
    throw Error(ErrorKind::kConfiguration, "service returned dim " + std::to_string(response_dim) +
                                               ", configured dim is " +
                                               std::to_string(expected_dim));
  }
  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  for (auto& v : raw) {
    try {
      out.push_back(EmbeddingVector::normalized(v));
    } catch (const Error& e) {
      throw Error(ErrorKind::kProtocol, std::string("unusable embedding: ") + e.what());
    }
  }
  return out;
}

/// Client for an OpenAI-style embeddings endpoint (BGE served behind one, for
/// instance). One POST per batch of at most `max_batch` texts.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderConfig config, http::RetryPolicy retry = {})
      : config_(std::move(config)), retry_(retry) {
    if (config_.dim == 0) throw Error(ErrorKind::kConfiguration, "embedder dim must be positive");
    if (config_.max_batch == 0) {
      throw Error(ErrorKind::kConfiguration, "embedder max_batch must be positive");
    }
    http::parse_url(config_.endpoint_url);
    token_ = http::resolve_token(config_.auth_token, kEmbedKeyEnv);
  }

  std::size_t dim() const override { return config_.dim; }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += config_.max_batch) {
      const std::size_t end = std::min(texts.size(), start + config_.max_batch);
      std::vector<std::string> batch(texts.begin() + start, texts.begin() + end);
      for (auto& v : embed_batch(batch)) out.push_back(std::move(v));
    }
    return out;
  }

  /// One request. `texts` must be non-empty and no larger than max_batch.
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const {
    if (texts.empty()) throw Error(ErrorKind::kValidation, "embedding batch is empty");
    if (texts.size() > config_.max_batch) {
      throw Error(ErrorKind::kValidation, "embedding batch exceeds max_batch");
    }
    const nlohmann::json body = {{"model", config_.model_name}, {"input", texts}};
    const auto res = http::post_json(config_.endpoint_url, dump_json(body), token_,
                                     config_.timeout, retry_, ErrorKind::kTransport);
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorKind::kService, "embedding service returned HTTP " +
                                           std::to_string(res.status) + ": " +
                                           http::excerpt(res.body));
    }
    return parse_embedding_response(res.body, texts.size(), config_.dim);
  }

 private:
  EmbedderConfig config_;
  http::RetryPolicy retry_;
  std::string token_;
};

}  // namespace chatsos
