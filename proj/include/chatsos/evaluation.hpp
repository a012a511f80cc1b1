#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "chatsos/error.hpp"
#include "chatsos/json_util.hpp"

namespace chatsos::eval {

inline constexpr std::size_t kCriteria = 5;
inline constexpr std::array<std::string_view, kCriteria> kCriterionNames = {
    "accuracy", "reliability", "adaptability", "conciseness", "speed"};

/// Rater scores in [0, 5] for one answer.
struct ScoreCard {
  std::array<double, kCriteria> scores{};  // order of kCriterionNames
  std::string subject_id;
  std::string task_id;
  std::string rater_id;

  bool operator==(const ScoreCard&) const = default;
};

/// Default: accuracy 0.3, reliability 0.3, adaptability 0.2, conciseness 0.1,
/// speed 0.1.
struct RubricWeights {
  std::array<double, kCriteria> w = {0.3, 0.3, 0.2, 0.1, 0.1};
};

struct Violation {
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  std::vector<std::string> warnings;  // e.g. scores off the half-point grid

  bool ok() const { return violations.empty(); }
};

inline ValidationResult validate_scorecard(const ScoreCard& card, const RubricWeights& weights) {
  ValidationResult r;
  for (std::size_t i = 0; i < kCriteria; ++i) {
    const double s = card.scores[i];
    const std::string name(kCriterionNames[i]);
    if (!std::isfinite(s) || s < 0.0 || s > 5.0) {
      r.violations.push_back({name, name + " score " + std::to_string(s) + " outside [0, 5]"});
    } else if (std::abs(s * 2.0 - std::round(s * 2.0)) > 1e-9) {
      r.warnings.push_back(name + " score " + std::to_string(s) + " is not a half-point value");
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < kCriteria; ++i) {
    const double w = weights.w[i];
    if (!std::isfinite(w) || w < 0.0) {
      r.violations.push_back({"weights", "weight for " + std::string(kCriterionNames[i]) +
                                             " must be non-negative"});
    }
    sum += w;
  }
  if (!(std::abs(sum - 1.0) <= 1e-9)) {
    r.violations.push_back({"weights", "weights sum to " + std::to_string(sum) + ", not 1"});
  }
  return r;
}

/// sum_i w_i * score_i, accumulated in criterion order.
inline double weighted_total(const ScoreCard& card, const RubricWeights& weights) {
  const auto v = validate_scorecard(card, weights);
  if (!v.ok()) throw Error(ErrorKind::kValidation, v.violations.front().message);
  double total = 0.0;
  for (std::size_t i = 0; i < kCriteria; ++i) total += weights.w[i] * card.scores[i];
  return total;
}

struct SubjectSummary {
  std::string subject_id;
  std::size_t cards = 0;
  std::array<double, kCriteria> mean{};
  double weighted_mean = 0.0;
};

struct PairDelta {
  std::string higher;  // earlier in the ranking
  std::string lower;
  std::array<double, kCriteria> delta{};
  double weighted_delta = 0.0;
};

struct ComparisonReport {
  std::vector<SubjectSummary> subjects;  // ranked
  std::vector<PairDelta> deltas;         // every ranked pair (i < j)
};

/// Per-subject means and pairwise differences. Cards are summed in a
/// canonical order, so the report does not depend on input order.
inline ComparisonReport compare_reports(std::vector<ScoreCard> cards, const RubricWeights& weights) {
  if (cards.empty()) throw Error(ErrorKind::kValidation, "no score cards to compare");
  std::sort(cards.begin(), cards.end(), [](const ScoreCard& a, const ScoreCard& b) {
    return std::tie(a.subject_id, a.task_id, a.rater_id, a.scores) <
           std::tie(b.subject_id, b.task_id, b.rater_id, b.scores);
  });
  std::map<std::string, std::vector<const ScoreCard*>> groups;
  for (const auto& c : cards) groups[c.subject_id].push_back(&c);

  ComparisonReport report;
  for (const auto& [subject, group] : groups) {
    SubjectSummary s;
    s.subject_id = subject;
    s.cards = group.size();
    double total = 0.0;
    for (const ScoreCard* c : group) {
      for (std::size_t i = 0; i < kCriteria; ++i) s.mean[i] += c->scores[i];
      total += weighted_total(*c, weights);
    }
    const double n = static_cast<double>(group.size());
    for (auto& m : s.mean) m /= n;
    s.weighted_mean = total / n;
    report.subjects.push_back(std::move(s));
  }
  std::stable_sort(report.subjects.begin(), report.subjects.end(),
                   [](const SubjectSummary& a, const SubjectSummary& b) {
                     if (a.weighted_mean != b.weighted_mean) return a.weighted_mean > b.weighted_mean;
                     return a.subject_id < b.subject_id;
                   });
  for (std::size_t i = 0; i < report.subjects.size(); ++i) {
    for (std::size_t j = i + 1; j < report.subjects.size(); ++j) {
      const auto& a = report.subjects[i];
      const auto& b = report.subjects[j];
      PairDelta d{a.subject_id, b.subject_id, {}, a.weighted_mean - b.weighted_mean};
      for (std::size_t k = 0; k < kCriteria; ++k) d.delta[k] = a.mean[k] - b.mean[k];
      report.deltas.push_back(std::move(d));
    }
  }
  return report;
}

inline ScoreCard card_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kSchema, "score card must be a JSON object");
  ScoreCard c;
  if (!j.contains("subject_id") || !j["subject_id"].is_string()) {
    throw Error(ErrorKind::kSchema, "score card needs string \"subject_id\"");
  }
  c.subject_id = j["subject_id"].get<std::string>();
  if (j.contains("task_id") && j["task_id"].is_string()) c.task_id = j["task_id"].get<std::string>();
  if (j.contains("rater_id") && j["rater_id"].is_string()) {
    c.rater_id = j["rater_id"].get<std::string>();
  }
  for (std::size_t i = 0; i < kCriteria; ++i) {
    const std::string name(kCriterionNames[i]);
    if (!j.contains(name) || !j[name].is_number()) {
      throw Error(ErrorKind::kSchema, "score card needs numeric \"" + name + "\"");
    }
    c.scores[i] = j[name].get<double>();
  }
  return c;
}

inline std::vector<ScoreCard> cards_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::kSchema, "score card file must be a JSON array");
  std::vector<ScoreCard> out;
  for (const auto& item : j) out.push_back(card_from_json(item));
  return out;
}

inline Json to_json(const ComparisonReport& r) {
  auto criteria = [](const std::array<double, kCriteria>& v) {
    Json o = Json::object();
    for (std::size_t i = 0; i < kCriteria; ++i) o[std::string(kCriterionNames[i])] = v[i];
    return o;
  };
  Json subjects = Json::array();
  for (std::size_t rank = 0; rank < r.subjects.size(); ++rank) {
    const auto& s = r.subjects[rank];
    subjects.push_back({{"rank", rank + 1},
                        {"subject_id", s.subject_id},
                        {"cards", s.cards},
                        {"mean", criteria(s.mean)},
                        {"weighted_total", s.weighted_mean}});
  }
  Json deltas = Json::array();
  for (const auto& d : r.deltas) {
    deltas.push_back({{"higher", d.higher},
                      {"lower", d.lower},
                      {"delta", criteria(d.delta)},
                      {"weighted_total", d.weighted_delta}});
  }
  return {{"subjects", subjects}, {"deltas", deltas}};
}

/// Fixed-width text table, one row per ranked subject.
inline std::string to_table(const ComparisonReport& r) {
  auto cell = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%13.3f", v);
    return std::string(buf);
  };
  std::size_t width = std::string_view("subject").size();
  for (const auto& s : r.subjects) width = std::max(width, s.subject_id.size());
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };

  std::string out = "rank  " + pad("subject");
  for (auto name : kCriterionNames) {
    out += std::string(13 - std::min<std::size_t>(13, name.size()) + 1, ' ');
    out += name;
  }
  out += "          total\n";
  for (std::size_t i = 0; i < r.subjects.size(); ++i) {
    const auto& s = r.subjects[i];
    char rank[8];
    std::snprintf(rank, sizeof rank, "%4zu", i + 1);
    out += std::string(rank) + "  " + pad(s.subject_id);
    for (double m : s.mean) out += " " + cell(m);
    out += "  " + cell(s.weighted_mean) + "\n";
  }
  return out;
}

}  // namespace chatsos::eval
