#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "saml/errors.hpp"

namespace saml {

/// Area under the ROC curve via the Mann-Whitney rank sum. Tied scores get their
/// average rank, so each tied positive/negative pair counts 0.5.
inline double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
    std::size_t pos = 0;
    for (double y : labels) {
        if (y != 0.0 && y != 1.0) throw DataError("auc: labels must be 0 or 1");
        pos += y == 1.0;
    }
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetricError("auc: needs at least one positive and one negative");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the rank sum stays integral under average ranks.
    double twice_rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double twice_rank = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1.0) twice_rank_sum += twice_rank;
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    const double pairs_won = (twice_rank_sum - p * (p + 1.0)) / 2.0;
    return pairs_won / (p * n);
}

/// Relative improvement over a base model after removing the random-guess level:
/// ((measured - 0.5) / (base - 0.5) - 1) * 100.
inline double rela_impr(double measured_auc, double base_auc) {
    if (base_auc == 0.5) throw UndefinedMetricError("rela_impr: base AUC of 0.5 leaves nothing to improve on");
    return ((measured_auc - 0.5) / (base_auc - 0.5) - 1.0) * 100.0;
}

/// Scores with their labels and scenario ids.
struct ScoredSet {
    std::vector<double> score;
    std::vector<double> label;
    std::vector<std::size_t> scenario;

    void append(const std::vector<double>& s, const std::vector<double>& y, const std::vector<std::size_t>& sc) {
        score.insert(score.end(), s.begin(), s.end());
        label.insert(label.end(), y.begin(), y.end());
        scenario.insert(scenario.end(), sc.begin(), sc.end());
    }
    std::size_t size() const { return score.size(); }
};

struct ScenarioRow {
    std::size_t scenario = 0;
    std::size_t samples = 0;
    std::size_t positives = 0;
    std::optional<double> auc;  // empty when the scenario has a single class
};

struct ScenarioTable {
    std::vector<ScenarioRow> rows;  // scenarios present in the set, ascending
    std::optional<double> overall;  // pooled over all samples
};

inline ScenarioTable per_scenario_table(const ScoredSet& s) {
    ScenarioTable t;
    std::size_t max_s = 0;
    for (auto v : s.scenario) max_s = std::max(max_s, v + 1);
    std::vector<ScoredSet> parts(max_s);
    for (std::size_t k = 0; k < s.size(); ++k) {
        auto& p = parts[s.scenario[k]];
        p.score.push_back(s.score[k]);
        p.label.push_back(s.label[k]);
    }
    for (std::size_t sc = 0; sc < max_s; ++sc) {
        const auto& p = parts[sc];
        if (p.score.empty()) continue;
        ScenarioRow row;
        row.scenario = sc;
        row.samples = p.score.size();
        for (double y : p.label) row.positives += y == 1.0;
        if (row.positives > 0 && row.positives < row.samples) row.auc = auc(p.score, p.label);
        t.rows.push_back(row);
    }
    std::size_t pos = 0;
    for (double y : s.label) pos += y == 1.0;
    if (pos > 0 && pos < s.size()) t.overall = auc(s.score, s.label);
    return t;
}

} // namespace saml
