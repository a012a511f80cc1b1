#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "chatsos/error.hpp"
#include "chatsos/http.hpp"
#include "chatsos/json_util.hpp"
#include "chatsos/ngram.hpp"
#include "chatsos/prompt.hpp"

namespace chatsos {

inline constexpr const char* kLlmKeyEnv = "CHATSOS_LLM_KEY";

struct ChatTurn {
  std::string role;  // "user" or "assistant"
  std::string content;
};

/// A prompt plus the two offsets backends care about. A plain string has no
/// instruction part and is all query.
struct PromptView {
  std::string_view text;
  std::size_t system_bytes = 0;
  std::size_t query_offset = 0;

  static PromptView of(const RenderedPrompt& p) { return {p.text, p.system_bytes, p.query_offset}; }
  static PromptView plain(std::string_view s) { return {s, 0, 0}; }

  std::string_view system_part() const { return text.substr(0, system_bytes); }
  std::string_view user_part() const { return text.substr(system_bytes); }
  std::string_view query() const { return text.substr(query_offset); }
};

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::vector<ChatTurn> history;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string id() const = 0;
  /// Returns non-empty completion text or throws.
  virtual std::string complete(const PromptView& prompt, const CompletionParams& params) const = 0;
};

struct RemoteChatConfig {
  std::string endpoint_url;
  std::string model_name;
  std::string auth_token;  // falls back to CHATSOS_LLM_KEY
  std::chrono::milliseconds timeout{60'000};
};

/// Builds the chat-completions request body.
inline Json chat_request_body(const std::string& model, const PromptView& prompt,
                              const CompletionParams& params) {
  Json messages = Json::array();
  if (prompt.system_bytes > 0) {
    messages.push_back({{"role", "system"}, {"content", std::string(prompt.system_part())}});
  }
  for (const auto& turn : params.history) {
    messages.push_back({{"role", turn.role}, {"content", turn.content}});
  }
  messages.push_back({{"role", "user"}, {"content", std::string(prompt.user_part())}});
  return {{"model", model},
          {"messages", messages},
          {"temperature", params.temperature},
          {"max_tokens", params.max_tokens}};
}

/// First choice's message content (or legacy "text").
inline std::string parse_chat_response(const std::string& body) {
  Json doc;
  try {
    doc = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::kProtocol, std::string("chat response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() ||
      doc["choices"].empty()) {
    throw Error(ErrorKind::kProtocol, "chat response has no choices");
  }
  const auto& choice = doc["choices"][0];
  std::string text;
  if (choice.contains("message") && choice["message"].is_object() &&
      choice["message"].contains("content") && choice["message"]["content"].is_string()) {
    text = choice["message"]["content"].get<std::string>();
  } else if (choice.contains("text") && choice["text"].is_string()) {
    text = choice["text"].get<std::string>();
  } else {
    throw Error(ErrorKind::kProtocol, "chat response choice has no content");
  }
  if (text.empty()) throw Error(ErrorKind::kEmptyAnswer, "model returned an empty completion");
  return text;
}

class RemoteChatBackend final : public LlmBackend {
 public:
  explicit RemoteChatBackend(RemoteChatConfig config, http::RetryPolicy retry = {})
      : config_(std::move(config)), retry_(retry) {
    http::parse_url(config_.endpoint_url);
    token_ = http::resolve_token(config_.auth_token, kLlmKeyEnv);
  }

  std::string id() const override { return "remote_chat:" + config_.model_name; }

  std::string complete(const PromptView& prompt, const CompletionParams& params) const override {
    const Json body = chat_request_body(config_.model_name, prompt, params);
    const auto res = http::post_json(config_.endpoint_url, dump_json(body), token_, config_.timeout,
                                     retry_, ErrorKind::kBackendUnavailable);
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorKind::kService, "chat backend returned HTTP " + std::to_string(res.status) +
                                           ": " + http::excerpt(res.body));
    }
    return parse_chat_response(res.body);
  }

 private:
  RemoteChatConfig config_;
  http::RetryPolicy retry_;
  std::string token_;
};

/// Offline backend: continues the query with an n-gram model. Deterministic
/// for a fixed model, prompt and seed.
class NgramMockBackend final : public LlmBackend {
 public:
  NgramMockBackend(NgramModel model, GenerateOptions options)
      : model_(std::move(model)), options_(options) {
    if (!(model_.alpha() > 0.0)) {
      throw Error(ErrorKind::kConfiguration, "mock backend needs a smoothed model (alpha > 0)");
    }
  }

  std::string id() const override { return "ngram_mock:n=" + std::to_string(model_.order()); }

  std::string complete(const PromptView& prompt, const CompletionParams&) const override {
    const TokenSeq continuation = model_.generate(tokenize(prompt.query()), options_);
    if (continuation.empty()) {
      throw Error(ErrorKind::kEmptyAnswer, "mock model produced an empty completion");
    }
    return detokenize(continuation);
  }

  const NgramModel& model() const noexcept { return model_; }

 private:
  NgramModel model_;
  GenerateOptions options_;
};

}  // namespace chatsos
