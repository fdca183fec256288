#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "saml/numerics/ops.hpp"

namespace saml {

struct LossReport {
    double target = 0.0;
    double aux = 0.0;
    double total = 0.0;
    std::vector<std::size_t> scenario_counts;
};

struct LossOptions {
    bool include_target = true;
    bool include_aux = true;
    double target_weight = 1.0;
    double normalizer = 0.0;  // 0 means the batch size
};

struct LossTerms {
    Var total;
    std::optional<Var> target;
    std::optional<Var> aux;
    LossReport report;
};

/// Masked multi-branch loss plus the auxiliary loss.
///
/// `branch_probs` is [B x N] with one column per branch, or [B x 1] for a single
/// shared head. Each sample contributes the log-loss of its own column only; the
/// auxiliary head contributes over all samples. Both terms divide by the normalizer.
inline LossTerms total_loss(Var branch_probs, std::optional<Var> aux_prob, const std::vector<double>& labels,
                            const std::vector<std::size_t>& scenario, std::size_t num_scenarios,
                            const LossOptions& opt = {}) {
    const Tensor& pv = branch_probs.value();
    const std::size_t batch = labels.size();
    if (batch == 0) throw ContractError("total_loss: batch must be nonempty");
    if (scenario.size() != batch || pv.rank() != 2 || pv.rows() != batch)
        throw DimensionError("total_loss: probabilities " + shape_str(pv.shape()) + " vs " + std::to_string(batch) +
                             " labels");
    if (pv.cols() != 1 && pv.cols() != num_scenarios)
        throw DimensionError("total_loss: expected 1 or " + std::to_string(num_scenarios) + " probability columns");
    if (aux_prob && aux_prob->value().size() != batch) throw DimensionError("total_loss: aux probability length");
    LossReport rep;
    rep.scenario_counts.assign(num_scenarios, 0);
    for (auto s : scenario) {
        if (s >= num_scenarios)
            throw DataError("total_loss: scenario id " + std::to_string(s) + " >= " + std::to_string(num_scenarios));
        ++rep.scenario_counts[s];
    }
    const double norm = opt.normalizer > 0.0 ? opt.normalizer : static_cast<double>(batch);
    Tape& tape = *branch_probs.tape;

    LossTerms out;
    Var owned = pv.cols() == 1 ? branch_probs : select_per_row(branch_probs, scenario);
    Var target = log_loss(owned, labels, norm);
    rep.target = target.value().item();
    std::optional<Var> total;
    if (opt.include_target) {
        total = opt.target_weight == 1.0 ? target : scale(target, opt.target_weight);
        out.target = target;
    }
    if (aux_prob) {
        Var aux = log_loss(*aux_prob, labels, norm);
        rep.aux = aux.value().item();
        if (opt.include_aux) {
            total = total ? add(*total, aux) : aux;
            out.aux = aux;
        }
    }
    out.total = total ? *total : tape.constant(Tensor::scalar(0.0));
    rep.total = opt.target_weight * rep.target + rep.aux;
    out.report = std::move(rep);
    return out;
}

} // namespace saml
