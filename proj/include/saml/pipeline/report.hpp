#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "saml/eval/metrics.hpp"
#include "saml/pipeline/train.hpp"

namespace saml {

inline constexpr const char* kMetricsFormat = "saml-metrics/1";

struct BaselineRef {
    std::string name;
    double auc = 0.0;
};

inline nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json scenario_table_json(const ScenarioTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"scenario", r.scenario},
                        {"samples", r.samples},
                        {"positives", r.positives},
                        {"auc", optional_number(r.auc)},
                        {"single_class", !r.auc.has_value()}});
    return rows;
}

/// Metrics report: overall and per-scenario AUC, plus RelaImpr against a baseline run.
inline nlohmann::json metrics_report(const std::string& model_name, const Evaluation& ev,
                                     const std::optional<BaselineRef>& baseline = std::nullopt) {
    nlohmann::json j{{"format", kMetricsFormat},
                     {"model", model_name},
                     {"samples", ev.scored.size()},
                     {"overall_auc", optional_number(ev.table.overall)},
                     {"scenarios", scenario_table_json(ev.table)}};
    if (baseline) {
        nlohmann::json b{{"name", baseline->name}, {"auc", baseline->auc}};
        b["rela_impr"] = ev.table.overall ? nlohmann::json(rela_impr(*ev.table.overall, baseline->auc))
                                          : nlohmann::json(nullptr);
        j["baseline"] = b;
    }
    return j;
}

/// Reads the overall AUC and model name out of a metrics report.
inline BaselineRef baseline_from_report(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != kMetricsFormat)
        throw ConfigError(std::string("baseline report must carry format '") + kMetricsFormat + "'");
    if (!j.contains("overall_auc") || j["overall_auc"].is_null())
        throw ConfigError("baseline report has no overall AUC");
    return {j.value("model", std::string("baseline")), j["overall_auc"].get<double>()};
}

} // namespace saml
