#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "chatsos/prompt.hpp"

using namespace chatsos;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInternal;
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string repeat(std::string_view unit, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += unit;
  return out;
}

KnowledgeCandidate candidate(const std::string& doc, std::string text, double sim = 0.9) {
  return {make_chunk_id(doc, 0), sim, std::move(text)};
}

std::string random_text(std::mt19937_64& rng, std::size_t len) {
  static constexpr char32_t kAlphabet[] = {0x4E8B, 0x6545, 0x706B, 0x707E, 0x7206, 0x70B8,
                                           0x6CC4, 0x6F0F, 0x3002, 0xFF01, 0x20,   0x61,
                                           0x62,   0x2E,   0x4EBA, 0x5458};
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s += kAlphabet[rng() % std::size(kAlphabet)];
  return utf8::encode(s);
}

}  // namespace

TEST_CASE("scenario routing examples", "[prompt]") {
  const auto reg = TemplateRegistry::with_builtins();
  CHECK(select_template(Scenario::kGovernment, "任意", reg).template_id == "government");
  CHECK(detect_scenario("请简要分析一下某化工厂爆燃事故") == Scenario::kAccidentAnalysis);
  CHECK(detect_scenario("按照公文规范发布一份关于仓库火灾的政府事故调查结果通知") ==
        Scenario::kGovernment);
  CHECK(detect_scenario("写一篇关于燃气安全的科普文章") == Scenario::kPublic);
  CHECK(detect_scenario("整理近年建筑坍塌的研究文献") == Scenario::kResearcher);
  CHECK(detect_scenario("制定危化品仓库应急预案") == Scenario::kIndustryInsider);
  CHECK(detect_scenario("跨部门协作怎么做") == Scenario::kIndustryOutsider);
  CHECK(detect_scenario("hi") == Scenario::kDefault);
  CHECK(select_template(std::nullopt, "hello", reg).template_id == "default");
  CHECK(select_template(std::nullopt, "分析事故原因", reg).template_id == "accident_analysis");
}

TEST_CASE("parse_scenario accepts canonical names and lists them on error", "[prompt]") {
  CHECK(parse_scenario("Government") == Scenario::kGovernment);
  CHECK(parse_scenario("accidentanalysis") == Scenario::kAccidentAnalysis);
  for (Scenario s : kAllScenarios) CHECK(parse_scenario(to_string(s)) == s);
  try {
    parse_scenario("Goverment");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("Government, Researcher") != std::string::npos);
  }
}

TEST_CASE("every shipped template carries the refusal clause", "[prompt]") {
  const auto reg = TemplateRegistry::with_builtins();
  CHECK(reg.templates().size() == kAllScenarios.size());
  std::set<std::string> ids;
  for (const auto& [s, t] : reg.templates()) {
    CHECK(t.scenario == s);
    CHECK(t.preamble.find(kRefusalClause) != std::string::npos);
    CHECK(!t.exemplars.empty());
    ids.insert(t.template_id);
  }
  CHECK(ids == std::set<std::string>{"government", "researcher", "industry_insider",
                                     "industry_outsider", "public", "accident_analysis",
                                     "default"});
}

TEST_CASE("render places the query verbatim once", "[prompt]") {
  const auto reg = TemplateRegistry::with_builtins();
  const auto& t = select_template(Scenario::kDefault, "", reg);
  const std::string query = "2019年某港口仓库爆炸的直接原因是什么？";
  const auto r = render_prompt(t, query, {candidate("d", "仓库内违规存放硝酸铵。")}, 10000);
  CHECK(count_of(r.text, query) == 1);
  CHECK(r.text.substr(r.query_offset, query.size()) == query);
  CHECK(r.text.find(kRefusalClause) < r.system_bytes);
  CHECK(r.text.find("[来源 " + to_string(make_chunk_id("d", 0)) + "] 仓库内违规存放硝酸铵。") !=
        std::string::npos);
  CHECK(r.injected_chunk_ids == std::vector<ChunkId>{make_chunk_id("d", 0)});
  CHECK(r.dropped_chunk_ids.empty());
  CHECK(r.char_count == utf8::length(r.text));
}

TEST_CASE("render with no hits uses the no-knowledge sentence", "[prompt]") {
  const auto reg = TemplateRegistry::with_builtins();
  const auto& t = select_template(Scenario::kPublic, "", reg);
  const auto r = render_prompt(t, "hello", {}, 10000);
  CHECK(r.text.find(kNoKnowledgeSentence) != std::string::npos);
  CHECK(r.text.find("[来源") == std::string::npos);
  CHECK(r.injected_chunk_ids.empty());
  CHECK(r.dropped_chunk_ids.empty());
  CHECK(r.char_count == fixed_prompt_chars(t, "hello"));
}

TEST_CASE("render below the fixed size is a budget error", "[prompt]") {
  const auto reg = TemplateRegistry::with_builtins();
  const auto& t = select_template(Scenario::kDefault, "", reg);
  const std::size_t fixed = fixed_prompt_chars(t, "q");
  CHECK(kind_of([&] { render_prompt(t, "q", {}, fixed - 1); }) == ErrorKind::kBudget);
  CHECK_NOTHROW(render_prompt(t, "q", {}, fixed));
}

TEST_CASE("knowledge truncation examples", "[prompt]") {
  const auto a = candidate("a", repeat("甲", 80));
  const auto b = candidate("b", repeat("乙", 80));

  // Two 80-char chunks into 100 chars: the second does not fit and has no
  // terminator to cut at.
  const auto two = truncate_knowledge({a, b}, 100);
  REQUIRE(two.kept.size() == 1);
  CHECK(two.kept[0].chunk_id == a.chunk_id);
  CHECK(two.dropped == std::vector<ChunkId>{b.chunk_id});

  const auto all = truncate_knowledge({a, b}, 160);
  CHECK(all.kept.size() == 2);
  CHECK(all.dropped.empty());

  const auto none = truncate_knowledge({a, b}, 0);
  CHECK(none.kept.empty());
  CHECK(none.dropped.size() == 2);

  const auto c = candidate("c", repeat("丙", 60));
  const auto three = truncate_knowledge({a, b, c}, 0);
  CHECK(three.dropped == std::vector<ChunkId>{a.chunk_id, b.chunk_id, c.chunk_id});

  const auto x = candidate("x", repeat("子", 60));
  const auto y = candidate("y", repeat("丑", 60));
  const auto z = candidate("z", repeat("寅", 60));
  const auto sixty = truncate_knowledge({x, y, z}, 130);
  CHECK(sixty.kept.size() == 2);
  CHECK(sixty.dropped == std::vector<ChunkId>{z.chunk_id});
}

TEST_CASE("a partly fitting chunk is cut at a sentence end", "[prompt]") {
  // 30 + 30 chars with a terminator at position 30; 40 chars of room.
  const auto s = candidate("s", repeat("甲", 29) + "。" + repeat("乙", 29) + "。");
  const auto cut = truncate_knowledge({s}, 40);
  REQUIRE(cut.kept.size() == 1);
  CHECK(cut.kept[0].truncated);
  CHECK(cut.kept[0].text == repeat("甲", 29) + "。");

  // Less than half fits: dropped.
  const auto small = truncate_knowledge({s}, 29);
  CHECK(small.kept.empty());
  CHECK(small.dropped.size() == 1);

  // Later chunks are dropped even if they would fit.
  const auto later =
      truncate_knowledge({candidate("big", repeat("甲", 100)), candidate("tiny", "短。")}, 20);
  CHECK(later.kept.empty());
  CHECK(later.dropped.size() == 2);
}

TEST_CASE("per-item overhead counts against the budget", "[prompt]") {
  const auto a = candidate("a", repeat("甲", 10));
  CHECK(truncate_knowledge({a}, 53, 43).kept.size() == 1);
  CHECK(truncate_knowledge({a}, 52, 43).kept.empty());
}

TEST_CASE("randomized renders keep the prompt invariants", "[prompt][property]") {
  const auto reg = TemplateRegistry::with_builtins();
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const Scenario s = kAllScenarios[rng() % kAllScenarios.size()];
    const auto& t = select_template(s, "", reg);
    const std::string query = random_text(rng, 1 + rng() % 60);
    std::vector<KnowledgeCandidate> hits;
    const std::size_t n = rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      hits.push_back({make_chunk_id("doc" + std::to_string(trial), static_cast<std::uint32_t>(i)),
                      1.0 - 0.1 * static_cast<double>(i), random_text(rng, rng() % 300)});
    }
    const std::size_t budget = fixed_prompt_chars(t, query) + rng() % 1500;
    const auto r = render_prompt(t, query, hits, budget);
    INFO("trial " << trial);
    REQUIRE(r.text.find(kRefusalClause) != std::string::npos);
    REQUIRE(r.text.substr(r.query_offset, query.size()) == query);
    REQUIRE(r.char_count <= budget);
    REQUIRE(r.injected_chunk_ids.size() + r.dropped_chunk_ids.size() == hits.size());
    std::set<ChunkId> seen(r.injected_chunk_ids.begin(), r.injected_chunk_ids.end());
    seen.insert(r.dropped_chunk_ids.begin(), r.dropped_chunk_ids.end());
    REQUIRE(seen.size() == hits.size());
    // Kept chunks are a similarity-ordered prefix.
    for (std::size_t i = 0; i < r.injected_chunk_ids.size(); ++i) {
      REQUIRE(r.injected_chunk_ids[i] == hits[i].chunk_id);
    }

    // More budget never injects less.
    const auto bigger = render_prompt(t, query, hits, budget + 1 + rng() % 500);
    REQUIRE(bigger.injected_chunk_ids.size() >= r.injected_chunk_ids.size());
  }
}

TEST_CASE("templates load from JSON files", "[prompt]") {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("chatsos_templates_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const Json custom = {
      {"template_id", "public_v2"},
      {"scenario", "Public"},
      {"preamble", "请简明作答。" + std::string(kRefusalClause) + "。"},
      {"task_instruction", "用一句话回答。"},
      {"exemplars", Json::array({{{"q", "问"}, {"a", "答"}}})},
  };
  std::ofstream(dir / "b.json") << custom.dump();

  auto reg = TemplateRegistry::with_builtins();
  reg.load_directory(dir);
  const auto& t = select_template(Scenario::kPublic, "", reg);
  CHECK(t.template_id == "public_v2");
  REQUIRE(t.exemplars.size() == 1);
  CHECK(t.exemplars[0] == Exemplar{"问", "答"});
  CHECK(template_from_json(to_json(t)) == t);

  Json bad = custom;
  bad["preamble"] = "没有拒答条款。";
  std::ofstream(dir / "c.json") << bad.dump();
  CHECK(kind_of([&] { reg.load_directory(dir); }) == ErrorKind::kValidation);

  std::ofstream(dir / "c.json") << "{not json";
  CHECK(kind_of([&] { reg.load_directory(dir); }) == ErrorKind::kParse);

  std::filesystem::remove_all(dir);
  CHECK(kind_of([&] { reg.load_directory(dir); }) == ErrorKind::kIo);
}
