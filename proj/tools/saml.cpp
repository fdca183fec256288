#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saml/data/synthetic.hpp"
#include "saml/pipeline/run.hpp"

namespace fs = std::filesystem;
using namespace saml;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--config", c.config, "JSON file with settings")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--out", c.out, out_help);
    cmd->add_option("--set", c.overrides, "override one setting, key=value (repeatable)");
}

RunConfig run_config(const Common& c, const std::string& data) {
    RunConfig cfg;
    if (!c.config.empty()) apply_json(cfg, read_json_file(c.config));
    if (!data.empty()) cfg.data = data;
    if (!c.out.empty()) cfg.out = c.out;
    if (c.seed) cfg.seed = *c.seed;
    for (const auto& kv : c.overrides) apply_json(cfg, parse_override(kv));
    cfg.validate();
    return cfg;
}

SyntheticSpec synth_spec(const Common& c) {
    nlohmann::json j = c.config.empty() ? nlohmann::json::object() : read_json_file(c.config);
    if (c.seed) j["seed"] = *c.seed;
    for (const auto& kv : c.overrides) j.update(parse_override(kv));
    return synthetic_spec_from_json(j);
}

Dataset load_run_data(const RunConfig& cfg) {
    if (cfg.data.empty()) throw ConfigError("no dataset given (use --data or the 'data' config key)");
    return load_dataset(cfg.data);
}

void print_summary(const Dataset& d) {
    const std::size_t n = d.schema.num_scenarios;
    std::vector<std::size_t> count(n, 0), pos(n, 0), train(n, 0);
    for (const auto& r : d.records) {
        const auto s = static_cast<std::size_t>(r.scenario);
        ++count[s];
        pos[s] += r.label == 1;
        train[s] += r.ts < d.split_ts;
    }
    std::cout << "scenario  samples  train  test  positive_rate\n";
    for (std::size_t s = 0; s < n; ++s)
        std::cout << std::setw(8) << s << std::setw(9) << count[s] << std::setw(7) << train[s] << std::setw(6)
                  << count[s] - train[s] << std::setw(15) << std::fixed << std::setprecision(4)
                  << (count[s] ? static_cast<double>(pos[s]) / static_cast<double>(count[s]) : 0.0) << '\n';
    std::cout << "total " << d.records.size() << " records, data hash " << data_hash(d) << '\n';
}

std::string fmt_auc(const std::optional<double>& a) {
    if (!a) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *a;
    return s.str();
}

void print_table(const nlohmann::json& metrics) {
    std::cout << "overall AUC " << fmt_auc(metrics["overall_auc"].is_null()
                                               ? std::nullopt
                                               : std::optional<double>(metrics["overall_auc"].get<double>()))
              << '\n';
    for (const auto& r : metrics["scenarios"])
        std::cout << "  scenario " << r["scenario"].get<std::size_t>() << ": samples " << r["samples"].get<std::size_t>()
                  << ", AUC "
                  << (r["auc"].is_null() ? std::string("- (single class)") : fmt_auc(r["auc"].get<double>())) << '\n';
    if (metrics.contains("baseline") && !metrics["baseline"]["rela_impr"].is_null())
        std::cout << "RelaImpr vs " << metrics["baseline"]["name"].get<std::string>() << ": " << std::fixed
                  << std::setprecision(2) << metrics["baseline"]["rela_impr"].get<double>() << "%\n";
}

void print_suite(const SuiteResult& s) {
    std::cout << std::left << std::setw(20) << "model" << std::right << std::setw(9) << "overall";
    const std::size_t n = s.rows.empty() ? 0 : s.rows.front().scenario_auc.size();
    for (std::size_t k = 0; k < n; ++k) std::cout << std::setw(9) << ("s" + std::to_string(k));
    std::cout << std::setw(11) << "RelaImpr" << '\n';
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        const auto& r = s.rows[i];
        std::cout << std::left << std::setw(20) << r.name << std::right << std::setw(9) << fmt_auc(r.overall);
        for (const auto& a : r.scenario_auc) std::cout << std::setw(9) << fmt_auc(a);
        const auto& ri = s.report["rows"][i]["rela_impr"];
        std::ostringstream v;
        if (ri.is_null()) v << "-";
        else v << std::fixed << std::setprecision(2) << ri.get<double>() << "%";
        std::cout << std::setw(11) << v.str() << '\n';
    }
    std::cout << "data hash " << s.data_hash << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scenario CTR modeling: synthesize data, train, evaluate, run suites"};
    app.require_subcommand(1);

    Common synth_c, train_c, eval_c, suite_c;
    std::string train_data, eval_data, eval_ckpt, eval_baseline, suite_name, suite_data, suite_spec;

    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-scenario dataset");
    add_common(synth, synth_c, "output directory (writes data.jsonl)");

    auto* train = app.add_subcommand("train", "train one model variant");
    add_common(train, train_c, "output directory");
    train->add_option("--data", train_data, "dataset file");

    auto* eval = app.add_subcommand("eval", "score a dataset's test split with a checkpoint");
    add_common(eval, eval_c, "output directory");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "dataset file")->required();
    eval->add_option("--baseline", eval_baseline, "metrics report of a baseline run")->check(CLI::ExistingFile);

    auto* suite = app.add_subcommand("suite", "train a group of variants on the same data");
    add_common(suite, suite_c, "output directory");
    suite->add_option("suite", suite_name, "ablation or per_scenario")->required()->check(
        CLI::IsMember(suite_names()));
    suite->add_option("--data", suite_data, "dataset file");
    suite->add_option("--spec", suite_spec, "synthetic spec to generate the data from")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const auto spec = synth_spec(synth_c);
            const fs::path dir = synth_c.out.empty() ? fs::path(".") : fs::path(synth_c.out);
            fs::create_directories(dir);
            const auto data = generate_synthetic(spec);
            write_dataset(data, (dir / "data.jsonl").string());
            print_summary(data);
            std::cout << "wrote " << (dir / "data.jsonl").string() << '\n';
        } else if (*train) {
            const auto cfg = run_config(train_c, train_data);
            const auto data = load_run_data(cfg);
            std::cerr << "training " << to_string(cfg.variant) << " on " << data.records.size() << " records\n";
            auto run = train_run(cfg, data, cfg.out);
            for (const auto& e : run.result.epochs)
                std::cout << "epoch " << e.epoch << "  target " << std::fixed << std::setprecision(5) << e.target
                          << "  aux " << e.aux << "  test AUC " << fmt_auc(e.test_auc) << '\n';
            print_table(run.metrics);
            std::cout << "wrote " << cfg.out << '\n';
        } else if (*eval) {
            const auto lm = load_checkpoint(eval_ckpt);
            const auto data = load_dataset(eval_data);
            std::optional<BaselineRef> base;
            if (!eval_baseline.empty()) base = baseline_from_report(read_json_file(eval_baseline));
            const auto ev = evaluate_checkpoint(lm, data);
            const auto metrics = metrics_report(to_string(lm.model->kind()), ev, base);
            const fs::path dir = eval_c.out.empty() ? fs::path(".") : fs::path(eval_c.out);
            fs::create_directories(dir);
            write_json_file(dir / "metrics.json", metrics);
            if (ev.trace) ev.trace->export_to((dir / "mutual_trace.json").string());
            print_table(metrics);
        } else if (*suite) {
            const auto cfg = run_config(suite_c, suite_data);
            Dataset data;
            if (!suite_spec.empty()) {
                Common c;
                c.config = suite_spec;
                data = generate_synthetic(synth_spec(c));
            } else {
                data = load_run_data(cfg);
            }
            auto res = run_suite(suite_name, cfg, data, cfg.out,
                                 [](const std::string& v) { std::cerr << "training " << v << '\n'; });
            print_suite(res);
        }
    } catch (const std::exception& e) {
        std::cerr << "saml: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
