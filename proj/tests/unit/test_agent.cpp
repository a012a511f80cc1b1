#include <catch_amalgamated.hpp>

#include <atomic>
#include <random>

#include "chatsos/agent.hpp"
#include "chatsos/corpus.hpp"
#include "support/synthetic_corpus.hpp"

using namespace chatsos;

namespace {

// Records how often it was called and what prompt it last saw.
class RecordingBackend final : public LlmBackend {
 public:
  std::string id() const override { return "recording"; }
  std::string complete(const PromptView& prompt, const CompletionParams&) const override {
    ++calls;
    last_prompt = std::string(prompt.text);
    return "依据已知信息作答。";
  }
  mutable std::atomic<int> calls{0};
  mutable std::string last_prompt;
};

class FailingBackend final : public LlmBackend {
 public:
  std::string id() const override { return "failing"; }
  std::string complete(const PromptView&, const CompletionParams&) const override {
    throw Error(ErrorKind::kBackendUnavailable, "model endpoint down");
  }
};

struct Fixture {
  Fixture() : store(256), embedder(), registry(TemplateRegistry::with_builtins()) {
    ingest_pipeline(testing::synthetic_incidents(20, 11), ChunkPolicy{200, 40}, embedder, store);
    std::vector<TokenSeq> corpus;
    for (const auto& r : store.records()) corpus.push_back(tokenize(r.text));
    mock = std::make_unique<NgramMockBackend>(NgramModel::train(corpus, 3, 1.0),
                                              GenerateOptions{32, 0, DecodeMode::kGreedy, 1});
  }

  KnowledgeStore store;
  LocalEmbedder embedder;
  TemplateRegistry registry;
  std::unique_ptr<NgramMockBackend> mock;
};

AskRequest ask(std::string q) {
  AskRequest r;
  r.query = std::move(q);
  return r;
}

}  // namespace

TEST_CASE("in-corpus questions are answered with citations", "[agent]") {
  const Fixture f;
  const Agent agent(f.store, f.embedder, f.registry, *f.mock);
  const auto records = f.store.records();
  for (std::size_t i = 0; i < records.size(); i += 7) {
    const auto env = agent.answer(ask(records[i].text));
    INFO(records[i].text);
    REQUIRE(!env.error);
    CHECK(!env.refused);
    CHECK(!env.answer.empty());
    REQUIRE(!env.citations.empty());
    CHECK(env.citations[0].chunk_id == records[i].chunk_id);
    CHECK(env.citations[0].similarity >= 0.999);
    CHECK(env.backend_id == "ngram_mock:n=3");
  }
}

TEST_CASE("out-of-corpus questions are refused without calling the model", "[agent]") {
  const Fixture f;
  RecordingBackend backend;
  const Agent agent(f.store, f.embedder, f.registry, backend);
  const auto env = agent.answer(ask(testing::random_hex(32, 5)));
  REQUIRE(!env.error);
  CHECK(env.refused);
  CHECK(env.citations.empty());
  CHECK(env.injected_chunk_ids.empty());
  CHECK(env.answer == kDefaultInsufficiencyMessage);
  CHECK(backend.calls == 0);
  CHECK(env.timings.llm_ms == 0.0);
}

TEST_CASE("answer_without_knowledge still asks the model but flags refusal", "[agent]") {
  const Fixture f;
  RecordingBackend backend;
  AgentOptions opts;
  opts.answer_without_knowledge = true;
  const Agent agent(f.store, f.embedder, f.registry, backend, opts);
  const auto env = agent.answer(ask(testing::random_hex(32, 6)));
  CHECK(env.refused);
  CHECK(env.citations.empty());
  CHECK(env.answer == "依据已知信息作答。");
  CHECK(backend.calls == 1);
  CHECK(backend.last_prompt.find(kNoKnowledgeSentence) != std::string::npos);
  CHECK(backend.last_prompt.find(kRefusalClause) != std::string::npos);
}

TEST_CASE("answers are deterministic apart from timings", "[agent]") {
  const Fixture f;
  const Agent agent(f.store, f.embedder, f.registry, *f.mock);
  const std::string q = f.store.records()[3].text;
  const auto a = agent.answer(ask(q));
  const auto b = agent.answer(ask(q));
  CHECK(a.answer == b.answer);
  CHECK(a.citations == b.citations);
  CHECK(a.injected_chunk_ids == b.injected_chunk_ids);
  CHECK(a.prompt_chars == b.prompt_chars);
  CHECK(a.scenario == b.scenario);
}

TEST_CASE("citations are sound and timings add up", "[agent][property]") {
  const Fixture f;
  RecordingBackend backend;
  AgentOptions opts;
  opts.k = 6;
  opts.threshold = 0.2;
  opts.knowledge_budget = 500;
  const Agent agent(f.store, f.embedder, f.registry, backend, opts);
  std::mt19937_64 rng(8);
  const auto records = f.store.records();
  for (int trial = 0; trial < 60; ++trial) {
    // Mix stored text with partial and random queries.
    const auto& r = records[rng() % records.size()];
    std::string q = utf8::prefix(r.text, 5 + rng() % 40);
    if (trial % 5 == 0) q = testing::random_hex(20, trial);
    const auto env = agent.answer(ask(q));
    INFO("trial " << trial);
    REQUIRE(!env.error);
    CHECK(env.citations.size() <= opts.k);
    CHECK(env.refused == env.citations.empty());
    for (std::size_t i = 0; i < env.citations.size(); ++i) {
      const auto& c = env.citations[i];
      CHECK(c.chunk_id == env.injected_chunk_ids[i]);
      CHECK(c.similarity >= opts.threshold);
      CHECK_NOTHROW(f.store.get_chunk(c.chunk_id));
      if (i > 0) CHECK(c.similarity <= env.citations[i - 1].similarity);
    }
    const auto& t = env.timings;
    CHECK(t.embed_ms >= 0.0);
    CHECK(t.search_ms >= 0.0);
    CHECK(t.llm_ms >= 0.0);
    CHECK(t.embed_ms + t.search_ms + t.llm_ms <= t.total_ms);
    CHECK(env.prompt_chars <=
          fixed_prompt_chars(*f.registry.find(env.scenario), q) + opts.knowledge_budget);
  }
}

TEST_CASE("request overrides and explicit scenario", "[agent]") {
  const Fixture f;
  RecordingBackend backend;
  const Agent agent(f.store, f.embedder, f.registry, backend);
  auto req = ask(f.store.records()[0].text);
  req.scenario = Scenario::kPublic;
  req.k = 1;
  const auto env = agent.answer(req);
  CHECK(env.scenario == Scenario::kPublic);
  CHECK(env.citations.size() == 1);

  auto strict = ask(f.store.records()[0].text);
  strict.threshold = 1.01;
  CHECK(agent.answer(strict).refused);

  const auto routed = agent.answer(ask("请分析这起事故的原因"));
  CHECK(routed.scenario == Scenario::kAccidentAnalysis);
}

TEST_CASE("failures land in the envelope", "[agent]") {
  const Fixture f;
  const FailingBackend failing;
  const Agent agent(f.store, f.embedder, f.registry, failing);
  const auto env = agent.answer(ask(f.store.records()[0].text));
  REQUIRE(env.error);
  CHECK(env.error->kind == ErrorKind::kBackendUnavailable);
  CHECK(env.answer.empty());
  CHECK(env.citations.empty());
  CHECK(!env.refused);

  const Json j = to_json(env);
  CHECK(j["error"]["kind"] == "backend_unavailable");
  CHECK(j["backend_id"] == "failing");

  RecordingBackend backend;
  const Agent bad_k(f.store, f.embedder, f.registry, backend);
  auto req = ask("x");
  req.k = 0;
  const auto k_env = bad_k.answer(req);
  REQUIRE(k_env.error);
  CHECK(k_env.error->kind == ErrorKind::kValidation);
}

TEST_CASE("envelope JSON shape", "[agent]") {
  const Fixture f;
  const Agent agent(f.store, f.embedder, f.registry, *f.mock);
  const Json j = to_json(agent.answer(ask(f.store.records()[1].text)));
  for (const char* key :
       {"answer", "citations", "scenario", "refused", "backend_id", "timings", "prompt_chars"}) {
    CHECK(j.contains(key));
  }
  CHECK(!j.contains("error"));
  CHECK(j["citations"][0]["chunk_id"].get<std::string>().size() == 36);
  CHECK(j["timings"].contains("total_ms"));
}
