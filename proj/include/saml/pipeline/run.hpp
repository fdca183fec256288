#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saml/data/dataset.hpp"
#include "saml/pipeline/checkpoint.hpp"
#include "saml/pipeline/config.hpp"
#include "saml/pipeline/report.hpp"
#include "saml/pipeline/train.hpp"

namespace saml {

inline constexpr const char* kTrainLogFormat = "saml-train-log/1";
inline constexpr const char* kSuiteFormat = "saml-suite/1";

/// Encoded train and test splits with normalization fitted on the training split.
struct PreparedData {
    FeatureSchema schema;
    NumericStats stats;
    std::vector<EncodedExample> train;
    std::vector<EncodedExample> test;
};

inline PreparedData prepare(const Dataset& d, const FeatureSchema& schema) {
    PreparedData p;
    p.schema = schema;
    const auto train = d.train();
    const auto test = d.test();
    p.stats = NumericStats::fit(schema, train);
    Encoder enc(schema, p.stats);
    p.train = enc.encode_all(train);
    p.test = enc.encode_all(test);
    return p;
}

/// Fingerprint of a dataset's serialized form.
inline std::string data_hash(const Dataset& d) {
    std::ostringstream s;
    write_dataset(d, s);
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << fnv1a(s.str());
    return h.str();
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

inline nlohmann::json epoch_json(const EpochLog& e) {
    return {{"epoch", e.epoch},
            {"target_loss", e.target},
            {"aux_loss", e.aux},
            {"train_auc", optional_number(e.train_auc)},
            {"test_auc", optional_number(e.test_auc)}};
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
    f << j.dump(2) << '\n';
    if (!f) throw DataError("failed writing '" + path.string() + "'");
}

struct RunOutput {
    std::unique_ptr<CtrModel> model;
    TrainResult result;
    Evaluation eval;
    nlohmann::json metrics;
};

/// Trains the configured variant, then scores the test split. When `out_dir` is not
/// empty it receives checkpoint.json, train_log.jsonl, metrics.json and, for models
/// with a mutual unit, mutual_trace.json.
inline RunOutput train_run(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir = {},
                           const std::optional<BaselineRef>& baseline = std::nullopt) {
    cfg.validate();
    const FeatureSchema schema = cfg.apply_dims(data.schema);
    const PreparedData prep = prepare(data, schema);
    RunOutput out;
    out.model = make_variant(schema, cfg.model_config());

    std::ofstream log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        log.open(out_dir / "train_log.jsonl", std::ios::binary);
        if (!log) throw DataError("cannot open '" + (out_dir / "train_log.jsonl").string() + "' for writing");
        log << nlohmann::json{{"format", kTrainLogFormat},
                              {"timestamp", utc_timestamp()},
                              {"data_hash", data_hash(data)},
                              {"config", to_json_value(cfg)}}
                   .dump()
            << '\n';
    }
    out.result = train_model(*out.model, prep.train, prep.test, cfg.train_options(), [&](const EpochLog& e) {
        if (log.is_open()) log << epoch_json(e).dump() << '\n' << std::flush;
    });
    out.eval = evaluate(*out.model, prep.test, cfg.eval_batch_size);
    out.metrics = metrics_report(to_string(cfg.variant), out.eval, baseline);
    if (!out_dir.empty()) {
        save_checkpoint((out_dir / "checkpoint.json").string(), *out.model, prep.stats);
        write_json_file(out_dir / "metrics.json", out.metrics);
        if (out.eval.trace) out.eval.trace->export_to((out_dir / "mutual_trace.json").string());
    }
    return out;
}

/// Scores a dataset's test split with a saved model.
inline Evaluation evaluate_checkpoint(const LoadedModel& lm, const Dataset& data, std::size_t batch_size = 1024) {
    require_compatible(lm.model->schema(), data.schema);
    Encoder enc(lm.model->schema(), lm.stats);
    return evaluate(*lm.model, enc.encode_all(data.test()), batch_size);
}

struct SuiteRow {
    std::string name;
    std::optional<double> overall;
    std::vector<std::optional<double>> scenario_auc;  // one column per scenario
};

struct SuiteResult {
    std::string suite;
    std::string data_hash;
    std::vector<SuiteRow> rows;
    nlohmann::json report;
};

namespace detail {

inline SuiteRow suite_row(const std::string& name, const ScenarioTable& t, std::size_t n) {
    SuiteRow r{name, t.overall, std::vector<std::optional<double>>(n)};
    for (const auto& row : t.rows)
        if (row.scenario < n) r.scenario_auc[row.scenario] = row.auc;
    return r;
}

inline nlohmann::json suite_json(const SuiteResult& s, const std::string& baseline) {
    std::optional<double> base;
    for (const auto& r : s.rows)
        if (r.name == baseline) base = r.overall;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : s.rows) {
        nlohmann::json cols = nlohmann::json::array();
        for (const auto& a : r.scenario_auc) cols.push_back(optional_number(a));
        nlohmann::json row{{"model", r.name}, {"overall_auc", optional_number(r.overall)}, {"scenario_auc", cols}};
        row["rela_impr"] = (base && r.overall && *base != 0.5) ? nlohmann::json(rela_impr(*r.overall, *base))
                                                               : nlohmann::json(nullptr);
        rows.push_back(row);
    }
    return {{"format", kSuiteFormat}, {"suite", s.suite}, {"data_hash", s.data_hash}, {"baseline", baseline},
            {"rows", rows}};
}

} // namespace detail

inline std::vector<std::string> suite_names() { return {"ablation", "per_scenario"}; }

/// Trains several variants on the same data and seed and tabulates their test AUC.
/// ablation: full, no_gate, no_aux, no_gate_mut, unified_baseline.
/// per_scenario: one row per scenario model of the individual baseline, then
/// unified_baseline and full; every row is scored on every scenario.
inline SuiteResult run_suite(const std::string& suite, const RunConfig& base, const Dataset& data,
                             const std::filesystem::path& out_dir = {},
                             const std::function<void(const std::string&)>& progress = {}) {
    SuiteResult res;
    res.suite = suite;
    res.data_hash = data_hash(data);
    const std::size_t n = data.schema.num_scenarios;
    auto run_variant = [&](VariantKind v) {
        RunConfig c = base;
        c.variant = v;
        if (progress) progress(to_string(v));
        return train_run(c, data, out_dir.empty() ? out_dir : out_dir / to_string(v));
    };
    if (suite == "ablation") {
        for (auto v : {VariantKind::Full, VariantKind::NoGate, VariantKind::NoAux, VariantKind::NoGateMut,
                       VariantKind::UnifiedBaseline}) {
            auto r = run_variant(v);
            res.rows.push_back(detail::suite_row(to_string(v), r.eval.table, n));
        }
        res.report = detail::suite_json(res, to_string(VariantKind::UnifiedBaseline));
    } else if (suite == "per_scenario") {
        auto ind = run_variant(VariantKind::IndividualBaseline);
        auto& model = dynamic_cast<IndividualModel&>(*ind.model);
        const PreparedData prep = prepare(data, base.apply_dims(data.schema));
        for (std::size_t s = 0; s < n; ++s) {
            auto ev = evaluate(model.member(s), prep.test, base.eval_batch_size);
            res.rows.push_back(detail::suite_row("individual_s" + std::to_string(s), ev.table, n));
        }
        for (auto v : {VariantKind::UnifiedBaseline, VariantKind::Full}) {
            auto r = run_variant(v);
            res.rows.push_back(detail::suite_row(to_string(v), r.eval.table, n));
        }
        res.report = detail::suite_json(res, to_string(VariantKind::UnifiedBaseline));
    } else {
        throw ConfigError("unknown suite '" + suite + "' (expected ablation or per_scenario)");
    }
    if (!out_dir.empty()) write_json_file(out_dir / "suite.json", res.report);
    return res;
}

} // namespace saml
