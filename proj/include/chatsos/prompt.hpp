#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chatsos/error.hpp"
#include "chatsos/json_util.hpp"
#include "chatsos/snapshot.hpp"
#include "chatsos/store.hpp"
#include "chatsos/text.hpp"
#include "chatsos/utf8.hpp"

namespace chatsos {

/// User groups that get their own template, plus the accident-analysis task
/// and a fallback.
enum class Scenario {
  kGovernment,
  kResearcher,
  kIndustryInsider,
  kIndustryOutsider,
  kPublic,
  kAccidentAnalysis,
  kDefault,
};

inline constexpr std::array<Scenario, 7> kAllScenarios = {
    Scenario::kGovernment,      Scenario::kResearcher, Scenario::kIndustryInsider,
    Scenario::kIndustryOutsider, Scenario::kPublic,     Scenario::kAccidentAnalysis,
    Scenario::kDefault,
};

constexpr std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::kGovernment: return "Government";
    case Scenario::kResearcher: return "Researcher";
    case Scenario::kIndustryInsider: return "IndustryInsider";
    case Scenario::kIndustryOutsider: return "IndustryOutsider";
    case Scenario::kPublic: return "Public";
    case Scenario::kAccidentAnalysis: return "AccidentAnalysis";
    case Scenario::kDefault: return "Default";
  }
  return "Default";
}

inline std::string scenario_names() {
  std::string out;
  for (Scenario s : kAllScenarios) {
    if (!out.empty()) out += ", ";
    out += to_string(s);
  }
  return out;
}

/// Case-insensitive match on the canonical names.
inline Scenario parse_scenario(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const std::string want = lower(name);
  for (Scenario s : kAllScenarios) {
    if (lower(to_string(s)) == want) return s;
  }
  throw Error(ErrorKind::kValidation,
              "unknown scenario \"" + std::string(name) + "\"; valid values: " + scenario_names());
}

inline constexpr std::string_view kRefusalClause =
    "若依给定知识无法回答，只需说明给定信息不足，绝对禁止编造";
inline constexpr std::string_view kNoKnowledgeSentence = "（无相关已知信息）";
inline constexpr std::string_view kInformationSlot = "{information}";
inline constexpr std::string_view kQuerySlot = "{query}";
inline constexpr std::string_view kInformationHeader = "已知信息(information)：\n";
inline constexpr std::string_view kQueryHeader = "用户提问(query)：\n";

struct Exemplar {
  std::string question;
  std::string answer;

  bool operator==(const Exemplar&) const = default;
};

struct PromptTemplate {
  std::string template_id;
  Scenario scenario = Scenario::kDefault;
  std::string preamble;  // system role + refusal clause
  std::string task_instruction;
  std::vector<Exemplar> exemplars;

  bool operator==(const PromptTemplate&) const = default;

  /// Template text with the two slot markers in place.
  std::string skeleton() const {
    std::string out = preamble;
    out += '\n';
    if (!task_instruction.empty()) {
      out += task_instruction;
      out += '\n';
    }
    if (!exemplars.empty()) {
      out += "\n示例：\n";
      for (std::size_t i = 0; i < exemplars.size(); ++i) {
        const std::string n = std::to_string(i + 1);
        out += "Q" + n + "：" + exemplars[i].question + "\n";
        out += "A" + n + "：" + exemplars[i].answer + "\n";
      }
    }
    out += '\n';
    out += kInformationHeader;
    out += kInformationSlot;
    out += '\n';
    out += kQueryHeader;
    out += kQuerySlot;
    return out;
  }

  void validate() const {
    if (template_id.empty()) throw Error(ErrorKind::kValidation, "template_id is empty");
    if (preamble.find(kRefusalClause) == std::string::npos) {
      throw Error(ErrorKind::kValidation,
                  "template " + template_id + ": preamble lacks the refusal clause");
    }
    const std::string s = skeleton();
    for (std::string_view marker : {kInformationSlot, kQuerySlot}) {
      const auto first = s.find(marker);
      if (first == std::string::npos || s.find(marker, first + 1) != std::string::npos) {
        throw Error(ErrorKind::kValidation, "template " + template_id + ": slot marker " +
                                                std::string(marker) +
                                                " must appear exactly once");
      }
    }
  }
};

inline Json to_json(const PromptTemplate& t) {
  Json ex = Json::array();
  for (const auto& e : t.exemplars) ex.push_back({{"q", e.question}, {"a", e.answer}});
  return {{"template_id", t.template_id},
          {"scenario", std::string(to_string(t.scenario))},
          {"preamble", t.preamble},
          {"task_instruction", t.task_instruction},
          {"exemplars", ex}};
}

inline PromptTemplate template_from_json(const Json& j) {
  auto str = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw Error(ErrorKind::kSchema, std::string("template missing \"") + key + "\"");
      return {};
    }
    if (!j[key].is_string()) {
      throw Error(ErrorKind::kSchema, std::string("template field \"") + key + "\" must be a string");
    }
    return j[key].get<std::string>();
  };
  if (!j.is_object()) throw Error(ErrorKind::kSchema, "template must be a JSON object");
  PromptTemplate t;
  t.template_id = str("template_id", true);
  t.scenario = parse_scenario(str("scenario", true));
  t.preamble = str("preamble", true);
  t.task_instruction = str("task_instruction", false);
  if (j.contains("exemplars")) {
    if (!j["exemplars"].is_array()) throw Error(ErrorKind::kSchema, "\"exemplars\" must be an array");
    for (const auto& e : j["exemplars"]) {
      if (!e.is_object() || !e.contains("q") || !e.contains("a") || !e["q"].is_string() ||
          !e["a"].is_string()) {
        throw Error(ErrorKind::kSchema, "each exemplar needs string \"q\" and \"a\"");
      }
      t.exemplars.push_back({e["q"].get<std::string>(), e["a"].get<std::string>()});
    }
  }
  t.validate();
  return t;
}

inline constexpr std::string_view kStandardPreamble =
    "你是安全生产领域的问答助手，请仅依据下方列出的已知信息作答，分步推理后再给出结论。"
    "若依给定知识无法回答，只需说明给定信息不足，绝对禁止编造。";

/// The seven shipped templates, one exemplar each.
inline std::vector<PromptTemplate> builtin_templates() {
  const std::string pre(kStandardPreamble);
  return {
      {"government", Scenario::kGovernment, pre,
       "请以公文体例撰写面向政府部门的材料，包含标题、主送单位、分条正文、落款与日期。",
       {{"请起草一份关于某化工园区火灾事故处置情况的通报。",
         "【关于某化工园区火灾事故处置情况的通报】\n各有关单位：\n一、基本情况：依据已知信息说明时间、地点与伤亡。\n"
         "二、处置情况：说明救援与善后措施。\n三、工作要求：提出隐患排查与责任落实要求。\n特此通报。"}}},
      {"researcher", Scenario::kResearcher, pre,
       "读者为科研人员。请突出数据与统计规律，采用学术写作风格，并将事实、统计结果和推断分开陈述。",
       {{"近年燃气事故的主要致因有哪些统计特征？",
         "1. 数据来源：仅使用已知信息中的事故记录。\n2. 统计特征：按致因分类并给出占比。\n3. 讨论：指出样本局限与后续研究方向。"}}},
      {"industry_insider", Scenario::kIndustryInsider, pre,
       "读者为本行业的安全管理人员。请分条给出可落地的风险评估、应急预案或培训要点。",
       {{"动火作业前需要做哪些风险评估？",
         "1. 危险源辨识：可燃物、受限空间、周边作业。\n2. 风险分级与控制措施。\n3. 作业许可与监护要求。\n4. 应急预案要点。"}}},
      {"industry_outsider", Scenario::kIndustryOutsider, pre,
       "读者来自其他专业或部门。请说明各部门如何协同以及现场处置步骤，少用行业术语。",
       {{"车间发生气体泄漏时行政部门应如何配合？",
         "1. 立即报告并配合疏散。\n2. 协助清点人员、联络救援。\n3. 按应急响应指南做好信息通报与后勤保障。"}}},
      {"public", Scenario::kPublic, pre,
       "读者为普通公众。请用通俗语言讲解安全常识与避险方法，可采用科普短文或新闻稿的体例。",
       {{"家里闻到燃气味怎么办？",
         "先别慌：不要开关电器、不要使用明火；打开门窗通风；关闭燃气阀门；到室外安全处拨打燃气公司或报警电话。"}}},
      {"accident_analysis", Scenario::kAccidentAnalysis, pre,
       "请对事故报告做结构化分析，依次给出基本情况、成因、责任认定、后果与防范措施以及结论建议。",
       {{"请分析某仓库火灾事故。",
         "1. 基本情况：时间、地点、事故等级、伤亡与直接经济损失。\n2. 成因：直接原因与间接原因。\n"
         "3. 责任认定：相关单位与监管部门的责任。\n4. 后果与防范：影响范围与整改措施。\n5. 结论建议。"}}},
      {"default", Scenario::kDefault, pre, "",
       {{"什么是安全生产主体责任？",
         "根据已知信息作答；若已知信息未涉及，说明给定信息不足。"}}},
  };
}

/// Scenario -> template. Always holds a Default entry once constructed via
/// with_builtins().
class TemplateRegistry {
 public:
  static TemplateRegistry with_builtins() {
    TemplateRegistry r;
    for (auto& t : builtin_templates()) r.add(std::move(t));
    return r;
  }

  /// Adds or replaces the template for its scenario.
  void add(PromptTemplate t) {
    t.validate();
    const Scenario s = t.scenario;
    templates_[s] = std::move(t);
  }

  /// Loads every *.json file in `dir`, in filename order; later files win.
  void load_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
      throw Error(ErrorKind::kIo, "templates directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Json j;
      try {
        j = Json::parse(binio::read_file(f));
      } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::kParse, f.string() + ": " + e.what());
      }
      try {
        add(template_from_json(j));
      } catch (const Error& e) {
        throw Error(e.kind(), f.string() + ": " + e.what());
      }
    }
  }

  const PromptTemplate* find(Scenario s) const {
    const auto it = templates_.find(s);
    return it == templates_.end() ? nullptr : &it->second;
  }

  const std::map<Scenario, PromptTemplate>& templates() const noexcept { return templates_; }

 private:
  std::map<Scenario, PromptTemplate> templates_;
};

/// Keyword routing, first match wins.
inline Scenario detect_scenario(std::string_view query) {
  auto has = [&](std::string_view kw) { return query.find(kw) != std::string_view::npos; };
  auto any = [&](std::initializer_list<std::string_view> kws) {
    return std::any_of(kws.begin(), kws.end(), has);
  };
  if (has("分析") && has("事故")) return Scenario::kAccidentAnalysis;
  if (any({"通知", "公文", "政府"})) return Scenario::kGovernment;
  if (any({"科普", "公众"})) return Scenario::kPublic;
  if (any({"研究", "论文", "数据分析"})) return Scenario::kResearcher;
  if (any({"风险评估", "预案"})) return Scenario::kIndustryInsider;
  if (any({"跨部门", "应急"})) return Scenario::kIndustryOutsider;
  return Scenario::kDefault;
}

inline const PromptTemplate& select_template(std::optional<Scenario> scenario,
                                             std::string_view query,
                                             const TemplateRegistry& registry) {
  if (scenario) {
    if (const auto* t = registry.find(*scenario)) return *t;
    throw Error(ErrorKind::kNotFound,
                "no template registered for scenario " + std::string(to_string(*scenario)));
  }
  if (const auto* t = registry.find(detect_scenario(query))) return *t;
  if (const auto* t = registry.find(Scenario::kDefault)) return *t;
  throw Error(ErrorKind::kNotFound, "template registry has no Default template");
}

struct KnowledgeCandidate {
  ChunkId chunk_id{};
  double similarity = 0.0;
  std::string text;
};

struct KnowledgeItem {
  ChunkId chunk_id{};
  double similarity = 0.0;
  std::string text;  // possibly cut at a sentence terminator
  bool truncated = false;
};

struct TruncationResult {
  std::vector<KnowledgeItem> kept;
  std::vector<ChunkId> dropped;
};

/// Greedy fit of similarity-ordered chunks into `budget` characters, each
/// chunk costing `per_item_overhead` plus its length. The first chunk that
/// does not fit is cut after its last sentence terminator inside the space
/// left, provided at least half of it fits; otherwise it is dropped. Every
/// later chunk is dropped.
inline TruncationResult truncate_knowledge(const std::vector<KnowledgeCandidate>& hits,
                                           std::size_t budget,
                                           std::size_t per_item_overhead = 0) {
  TruncationResult out;
  std::size_t used = 0;
  bool closed = false;
  for (const auto& h : hits) {
    if (closed) {
      out.dropped.push_back(h.chunk_id);
      continue;
    }
    const std::u32string cps = utf8::decode(h.text);
    const std::size_t cost = per_item_overhead + cps.size();
    if (used + cost <= budget) {
      out.kept.push_back({h.chunk_id, h.similarity, h.text, false});
      used += cost;
      continue;
    }
    closed = true;
    const std::size_t left = budget - used;
    if (left > per_item_overhead) {
      const std::size_t room = left - per_item_overhead;
      if (2 * room >= cps.size()) {
        std::size_t cut = 0;
        for (std::size_t i = room; i-- > 0;) {
          if (is_sentence_terminator(cps[i])) {
            cut = i + 1;
            break;
          }
        }
        if (cut > 0) {
          out.kept.push_back({h.chunk_id, h.similarity,
                              utf8::encode(std::u32string_view(cps).substr(0, cut)), true});
          continue;
        }
      }
    }
    out.dropped.push_back(h.chunk_id);
  }
  return out;
}

struct RenderedPrompt {
  std::string text;
  std::vector<ChunkId> injected_chunk_ids;
  std::vector<ChunkId> dropped_chunk_ids;
  std::vector<KnowledgeItem> knowledge;
  std::size_t char_count = 0;
  std::size_t system_bytes = 0;  // text[0, system_bytes) is the instruction part
  std::size_t query_offset = 0;  // byte offset of the filled query slot
};

namespace detail {

inline std::string source_tag(const ChunkId& id) { return "[来源 " + to_string(id) + "] "; }

// "[来源 " + 36-char UUID + "] " + trailing newline.
inline constexpr std::size_t kSourceOverhead = 4 + 36 + 2 + 1;

struct SkeletonParts {
  std::string before_info;
  std::string between;  // after info, before query
  std::string after_query;
};

inline SkeletonParts split_skeleton(const PromptTemplate& t) {
  const std::string s = t.skeleton();
  const auto info = s.find(kInformationSlot);
  const auto query = s.find(kQuerySlot);
  return {s.substr(0, info), s.substr(info + kInformationSlot.size(), query - info - kInformationSlot.size()),
          s.substr(query + kQuerySlot.size())};
}

}  // namespace detail

/// Characters the prompt needs with no knowledge injected.
inline std::size_t fixed_prompt_chars(const PromptTemplate& t, std::string_view query) {
  const auto parts = detail::split_skeleton(t);
  return utf8::length(parts.before_info) + utf8::length(kNoKnowledgeSentence) + 1 +
         utf8::length(parts.between) + utf8::length(query) + utf8::length(parts.after_query);
}

/// Fills the template: preamble, instruction and exemplars, then the tagged
/// knowledge chunks (or the no-knowledge sentence), then the query verbatim.
/// Knowledge is dropped to honor `budget`; the fixed parts never are.
inline RenderedPrompt render_prompt(const PromptTemplate& t, std::string_view query,
                                    const std::vector<KnowledgeCandidate>& hits,
                                    std::size_t budget) {
  const std::size_t fixed = fixed_prompt_chars(t, query);
  if (budget < fixed) {
    throw Error(ErrorKind::kBudget, "prompt budget " + std::to_string(budget) +
                                        " is below the fixed prompt size " +
                                        std::to_string(fixed));
  }
  const auto parts = detail::split_skeleton(t);
  const std::size_t frame = utf8::length(parts.before_info) + utf8::length(parts.between) +
                            utf8::length(query) + utf8::length(parts.after_query);
  const auto cut = truncate_knowledge(hits, budget - frame, detail::kSourceOverhead);

  RenderedPrompt out;
  out.text = parts.before_info;
  const std::size_t info_start = out.text.size();
  if (cut.kept.empty()) {
    out.text += kNoKnowledgeSentence;
    out.text += '\n';
  } else {
    for (const auto& k : cut.kept) {
      out.text += detail::source_tag(k.chunk_id);
      out.text += k.text;
      out.text += '\n';
      out.injected_chunk_ids.push_back(k.chunk_id);
    }
  }
  out.text += parts.between;
  out.query_offset = out.text.size();
  out.text += query;
  out.text += parts.after_query;
  out.dropped_chunk_ids = cut.dropped;
  out.knowledge = cut.kept;
  out.char_count = utf8::length(out.text);
  // Everything before the information header is instruction text.
  out.system_bytes = info_start - kInformationHeader.size();
  return out;
}

}  // namespace chatsos
