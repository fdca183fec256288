#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "saml/data/dataset.hpp"
#include "saml/eval/metrics.hpp"
#include "saml/eval/trace.hpp"
#include "saml/model/saml_model.hpp"

namespace saml {

struct TrainOptions {
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool track_train_auc = false;
    bool eval_test_each_epoch = true;
    std::optional<double> stop_at_train_auc;  // implies tracking the train AUC
    std::size_t eval_batch_size = 1024;
};

struct EpochLog {
    std::size_t epoch = 0;
    double target = 0.0;
    double aux = 0.0;
    std::optional<double> train_auc;
    std::optional<double> test_auc;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::optional<double> final_train_auc;
    std::optional<double> final_test_auc;
};

struct Evaluation {
    ScoredSet scored;
    ScenarioTable table;
    std::optional<MutualTrace> trace;
};

/// Scores every example in fixed-size sequential batches.
inline Evaluation evaluate(const CtrModel& model, const std::vector<EncodedExample>& examples,
                           std::size_t batch_size = 1024) {
    Evaluation ev;
    const auto* saml = dynamic_cast<const SamlModel*>(&model);
    if (saml && saml->traits().mutual) ev.trace = MutualTrace(saml->num_scenarios());
    if (!examples.empty()) {
        for (const auto& batch : sequential_batches(examples, batch_size)) {
            auto p = model.predict_detailed(batch);
            ev.scored.append(p.prob, batch.label, batch.scenario);
            if (ev.trace && p.mutual) ev.trace->accumulate(*p.mutual, batch.scenario);
        }
    }
    ev.table = per_scenario_table(ev.scored);
    return ev;
}

namespace detail {

struct Learner {
    SamlModel* model;
    std::vector<EncodedExample> data;
    Adam opt;
    std::uint64_t seed;
};

} // namespace detail

/// Trains `model` on `train`, evaluating on `test` after each epoch. The per-scenario
/// baseline trains each member on its own scenario's examples only.
inline TrainResult train_model(CtrModel& model, const std::vector<EncodedExample>& train,
                               const std::vector<EncodedExample>& test, const TrainOptions& opt,
                               const std::function<void(const EpochLog&)>& on_epoch = {}) {
    if (opt.batch_size == 0) throw ConfigError("batch size must be at least 1");
    std::vector<detail::Learner> learners;
    if (auto* ind = dynamic_cast<IndividualModel*>(&model)) {
        for (std::size_t s = 0; s < ind->size(); ++s) {
            std::vector<EncodedExample> part;
            for (const auto& e : train)
                if (e.scenario == s) part.push_back(e);
            learners.push_back({&ind->member(s), std::move(part), Adam(opt.adam), opt.seed + 1000003ull * (s + 1)});
        }
    } else if (auto* m = dynamic_cast<SamlModel*>(&model)) {
        learners.push_back({m, train, Adam(opt.adam), opt.seed});
    } else {
        throw ConfigError("train_model: unsupported model type");
    }
    std::vector<BatchIterator> iters;
    for (auto& l : learners) iters.emplace_back(l.data, opt.batch_size, l.seed);

    const bool track_train = opt.track_train_auc || opt.stop_at_train_auc.has_value();
    auto safe_auc = [&](const std::vector<EncodedExample>& ex) -> std::optional<double> {
        if (ex.empty()) return std::nullopt;
        return evaluate(model, ex, opt.eval_batch_size).table.overall;
    };

    TrainResult res;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch + 1;
        double seen = 0.0;
        for (std::size_t k = 0; k < learners.size(); ++k) {
            if (learners[k].data.empty()) continue;
            iters[k].for_each(epoch, [&](const EncodedBatch& batch) {
                auto rep = learners[k].model->train_step(batch, learners[k].opt);
                const double w = static_cast<double>(batch.size);
                log.target += rep.target * w;
                log.aux += rep.aux * w;
                seen += w;
            });
        }
        if (seen > 0.0) {
            log.target /= seen;
            log.aux /= seen;
        }
        const bool last = epoch + 1 == opt.epochs;
        if (track_train) log.train_auc = safe_auc(train);
        if (opt.eval_test_each_epoch || last) log.test_auc = safe_auc(test);
        bool stop = false;
        if (opt.stop_at_train_auc && log.train_auc && *log.train_auc >= *opt.stop_at_train_auc) {
            stop = true;
            if (!log.test_auc) log.test_auc = safe_auc(test);
        }
        res.epochs.push_back(log);
        if (on_epoch) on_epoch(log);
        if (stop) break;
    }
    if (!res.epochs.empty()) {
        res.final_train_auc = res.epochs.back().train_auc;
        res.final_test_auc = res.epochs.back().test_auc;
    }
    return res;
}

} // namespace saml
