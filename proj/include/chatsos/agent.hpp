#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"
#include "chatsos/json_util.hpp"
#include "chatsos/llm.hpp"
#include "chatsos/prompt.hpp"
#include "chatsos/store.hpp"

namespace chatsos {

inline constexpr std::string_view kDefaultInsufficiencyMessage =
    "给定信息不足，无法回答该问题。";

struct AgentOptions {
  std::size_t k = 4;
  double threshold = 0.35;
  std::size_t knowledge_budget = 6000;  // characters
  // When retrieval finds nothing: false skips the model entirely, true asks
  // it anyway with the no-knowledge prompt. Either way the answer is flagged
  // as refused.
  bool answer_without_knowledge = false;
  std::string insufficiency_message = std::string(kDefaultInsufficiencyMessage);
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct AskRequest {
  std::string query;
  std::optional<Scenario> scenario;
  std::optional<std::size_t> k;
  std::optional<double> threshold;
  std::vector<ChatTurn> history;
};

struct Citation {
  ChunkId chunk_id{};
  double similarity = 0.0;

  bool operator==(const Citation&) const = default;
};

struct StageTimings {
  double embed_ms = 0.0;
  double search_ms = 0.0;
  double llm_ms = 0.0;
  double total_ms = 0.0;
};

struct ErrorInfo {
  ErrorKind kind = ErrorKind::kInternal;
  std::string message;
};

struct AnswerEnvelope {
  std::string answer;
  std::vector<Citation> citations;
  Scenario scenario = Scenario::kDefault;
  bool refused = false;
  std::string backend_id;
  StageTimings timings;
  std::size_t prompt_chars = 0;
  std::vector<ChunkId> injected_chunk_ids;
  std::optional<ErrorInfo> error;
};

inline Json to_json(const AnswerEnvelope& e) {
  Json citations = Json::array();
  for (const auto& c : e.citations) {
    citations.push_back({{"chunk_id", to_string(c.chunk_id)}, {"similarity", c.similarity}});
  }
  Json out = {{"answer", e.answer},
              {"citations", citations},
              {"scenario", std::string(to_string(e.scenario))},
              {"refused", e.refused},
              {"backend_id", e.backend_id},
              {"timings",
               {{"embed_ms", e.timings.embed_ms},
                {"search_ms", e.timings.search_ms},
                {"llm_ms", e.timings.llm_ms},
                {"total_ms", e.timings.total_ms}}},
              {"prompt_chars", e.prompt_chars}};
  if (e.error) {
    out["error"] = {{"kind", std::string(to_string(e.error->kind))},
                    {"message", e.error->message}};
  }
  return out;
}

/// Runs one question through embed -> retrieve -> template -> render ->
/// complete. Holds only references; safe to call concurrently.
class Agent {
 public:
  Agent(const KnowledgeStore& store, const Embedder& embedder, const TemplateRegistry& registry,
        const LlmBackend& backend, AgentOptions options = {})
      : store_(store),
        embedder_(embedder),
        registry_(registry),
        backend_(backend),
        options_(std::move(options)) {}

  const AgentOptions& options() const noexcept { return options_; }

  AnswerEnvelope answer(const AskRequest& req) const {
    using Clock = std::chrono::steady_clock;
    auto ms_since = [](Clock::time_point t) {
      return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
    };
    const auto start = Clock::now();
    AnswerEnvelope env;
    env.backend_id = backend_.id();
    env.scenario = req.scenario.value_or(detect_scenario(req.query));
    try {
      auto t = Clock::now();
      const EmbeddingVector q = embedder_.embed_one(req.query);
      env.timings.embed_ms = ms_since(t);

      t = Clock::now();
      const auto hits = store_.search_top_k(q, req.k.value_or(options_.k),
                                            req.threshold.value_or(options_.threshold));
      env.timings.search_ms = ms_since(t);

      const PromptTemplate& tmpl = select_template(req.scenario, req.query, registry_);
      env.scenario = tmpl.scenario;

      std::vector<KnowledgeCandidate> candidates;
      candidates.reserve(hits.size());
      for (const auto& h : hits) {
        candidates.push_back({h.chunk_id, h.similarity, store_.get_chunk(h.chunk_id).text});
      }
      const std::size_t budget = fixed_prompt_chars(tmpl, req.query) + options_.knowledge_budget;
      const RenderedPrompt prompt = render_prompt(tmpl, req.query, candidates, budget);
      env.prompt_chars = prompt.char_count;
      env.injected_chunk_ids = prompt.injected_chunk_ids;

      const CompletionParams params{options_.temperature, options_.max_tokens, req.history};
      if (prompt.injected_chunk_ids.empty()) {
        env.refused = true;
        if (options_.answer_without_knowledge) {
          t = Clock::now();
          env.answer = backend_.complete(PromptView::of(prompt), params);
          env.timings.llm_ms = ms_since(t);
        } else {
          env.answer = options_.insufficiency_message;
        }
      } else {
        t = Clock::now();
        env.answer = backend_.complete(PromptView::of(prompt), params);
        env.timings.llm_ms = ms_since(t);
        for (const auto& k : prompt.knowledge) env.citations.push_back({k.chunk_id, k.similarity});
      }
    } catch (const Error& e) {
      env.error = ErrorInfo{e.kind(), e.what()};
      env.answer.clear();
      env.citations.clear();
      env.refused = false;
    }
    env.timings.total_ms = ms_since(start);
    return env;
  }

 private:
  const KnowledgeStore& store_;
  const Embedder& embedder_;
  const TemplateRegistry& registry_;
  const LlmBackend& backend_;
  AgentOptions options_;
};

}  // namespace chatsos
