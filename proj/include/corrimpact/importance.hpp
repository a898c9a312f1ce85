#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corrimpact/error.hpp"

namespace corrimpact {

enum class Learner { logit, forest };

// The nine interpretation techniques. Identifiers returned by technique_id()
// are stable and used on the command line and in reports.
enum class Technique { type1, type2_wald, type2_lr, type2_f, type2_chisq, gini, gini_scaled, perm, perm_scaled };

inline constexpr std::array<Technique, 9> all_techniques{
    Technique::type1,  Technique::type2_wald,  Technique::type2_lr, Technique::type2_f,    Technique::type2_chisq,
    Technique::gini,   Technique::gini_scaled, Technique::perm,     Technique::perm_scaled};

inline constexpr std::string_view technique_id(Technique t) {
  switch (t) {
    case Technique::type1: return "type1";
    case Technique::type2_wald: return "type2-wald";
    case Technique::type2_lr: return "type2-lr";
    case Technique::type2_f: return "type2-f";
    case Technique::type2_chisq: return "type2-chisq";
    case Technique::gini: return "gini";
    case Technique::gini_scaled: return "gini-scaled";
    case Technique::perm: return "perm";
    case Technique::perm_scaled: return "perm-scaled";
  }
  return "?";
}

inline std::string technique_list() {
  std::string s;
  for (auto t : all_techniques) {
    if (!s.empty()) s += ", ";
    s += technique_id(t);
  }
  return s;
}

inline Technique parse_technique(std::string_view id) {
  for (auto t : all_techniques)
    if (technique_id(t) == id) return t;
  throw usage_error("unknown technique '" + std::string(id) + "'; valid: " + technique_list());
}

inline constexpr Learner learner_of(Technique t) {
  switch (t) {
    case Technique::gini:
    case Technique::gini_scaled:
    case Technique::perm:
    case Technique::perm_scaled: return Learner::forest;
    default: return Learner::logit;
  }
}

inline constexpr std::string_view learner_id(Learner l) { return l == Learner::logit ? "logit" : "forest"; }

inline Learner parse_learner(std::string_view id) {
  if (id == "logit") return Learner::logit;
  if (id == "forest") return Learner::forest;
  throw usage_error("unknown learner '" + std::string(id) + "'; valid: logit, forest");
}

struct ImportanceRow {
  std::string metric;
  double score = 0.0;  // test statistic (ANOVA) or mean decrease (forest)
  double share = 0.0;  // fraction of the table's positive total
  std::optional<double> sd;       // per-tree standard deviation (forest)
  std::optional<double> p_value;  // ANOVA techniques
  int df = 0;                     // ANOVA techniques; 0 for aliased metrics
  bool aliased = false;           // dropped from the logistic design for perfect collinearity
  bool degenerate = false;        // scaled score with zero spread
};

/// Per-metric importance for one technique, rows in model-specification order.
struct ImportanceTable {
  Technique technique = Technique::type1;
  std::vector<ImportanceRow> rows;
  std::string note;  // e.g. which other technique this one coincides with

  const ImportanceRow& row(std::string_view metric) const {
    for (const auto& r : rows)
      if (r.metric == metric) return r;
    throw data_error("metric '" + std::string(metric) + "' not in importance table");
  }

  // share_i = max(score_i, 0) / sum_j max(score_j, 0); all zero when nothing is positive.
  // Summed in ascending order so the total does not depend on row order.
  void compute_shares() {
    std::vector<double> positive;
    for (const auto& r : rows) positive.push_back(std::max(r.score, 0.0));
    std::sort(positive.begin(), positive.end());
    double total = 0.0;
    for (double v : positive) total += v;
    for (auto& r : rows) r.share = total > 0.0 ? std::max(r.score, 0.0) / total : 0.0;
  }
};

// ANOVA output shares the importance table shape (statistic, df, p-value, share).
using AnovaTable = ImportanceTable;

}  // namespace corrimpact
