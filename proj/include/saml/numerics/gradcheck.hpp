#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "saml/numerics/tape.hpp"

namespace saml {

/// |a - n| / max(|a|, |n|, floor). The floor keeps exact-zero gradients from turning
/// rounding noise into huge relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / den;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst;  // "<input>[<index>] analytic=... numeric=..."
};

/// Central finite differences over a function of several input tensors.
///
/// `f` builds a scalar on the tape from one leaf per input. The analytic gradient
/// comes from a single backward pass; each numeric partial re-evaluates `f` on a fresh
/// tape with one coordinate shifted by +-h. Stop-gradient sites are recorded on the
/// first pass and replayed on every shifted pass.
class GradientChecker {
public:
    using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

    explicit GradientChecker(double h = 1e-5) : h_(h) {}

    GradCheckResult check(const Fn& f, std::vector<Tensor> inputs, std::size_t max_coords_per_input = 0,
                          std::uint64_t seed = 0) const {
        StopGradientReplay replay;
        std::vector<Tensor> analytic;
        {
            Tape tape(&replay);
            std::vector<Var> leaves;
            for (auto& x : inputs) leaves.push_back(tape.variable(x, true));
            Var loss = f(tape, leaves);
            tape.backward(loss);
            for (auto& v : leaves) analytic.push_back(tape.grad(v));
        }
        replay.start_replay();
        auto eval = [&](const std::vector<Tensor>& xs) {
            replay.cursor = 0;
            Tape tape(&replay);
            std::vector<Var> leaves;
            for (const auto& x : xs) leaves.push_back(tape.variable(x, false));
            return f(tape, leaves).value().item();
        };
        GradCheckResult res;
        std::mt19937_64 rng(seed);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            std::vector<std::size_t> coords(inputs[k].size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
            if (max_coords_per_input && coords.size() > max_coords_per_input) {
                std::shuffle(coords.begin(), coords.end(), rng);
                coords.resize(max_coords_per_input);
            }
            for (auto i : coords) {
                const double x0 = inputs[k][i];
                inputs[k][i] = x0 + h_;
                const double fp = eval(inputs);
                inputs[k][i] = x0 - h_;
                const double fm = eval(inputs);
                inputs[k][i] = x0;
                const double numeric = (fp - fm) / (2.0 * h_);
                const double err = relative_error(analytic[k][i], numeric);
                ++res.checked;
                if (err > res.max_rel_error || res.worst.empty()) {
                    res.max_rel_error = std::max(res.max_rel_error, err);
                    res.worst = "input" + std::to_string(k) + "[" + std::to_string(i) +
                                "] analytic=" + std::to_string(analytic[k][i]) + " numeric=" + std::to_string(numeric);
                }
            }
        }
        return res;
    }

    /// Same check against parameters in place. `loss_fn` builds the loss on the given
    /// tape from the current parameter values. Parameter gradients are zeroed first.
    GradCheckResult check_parameters(const std::function<Var(Tape&)>& loss_fn, std::vector<Parameter*> params,
                                     std::size_t max_coords_per_param, std::uint64_t seed) const {
        for (auto* p : params) p->zero_grad();
        StopGradientReplay replay;
        std::vector<Tensor> analytic;
        {
            Tape tape(&replay);
            Var loss = loss_fn(tape);
            tape.backward(loss);
            for (auto* p : params) analytic.push_back(p->grad);
        }
        replay.start_replay();
        auto eval = [&] {
            replay.cursor = 0;
            Tape tape(&replay);
            return loss_fn(tape).value().item();
        };
        GradCheckResult res;
        std::mt19937_64 rng(seed);
        for (std::size_t k = 0; k < params.size(); ++k) {
            Parameter& p = *params[k];
            std::vector<std::size_t> coords(p.value.size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
            if (max_coords_per_param && coords.size() > max_coords_per_param) {
                std::shuffle(coords.begin(), coords.end(), rng);
                coords.resize(max_coords_per_param);
            }
            for (auto i : coords) {
                const double x0 = p.value[i];
                p.value[i] = x0 + h_;
                const double fp = eval();
                p.value[i] = x0 - h_;
                const double fm = eval();
                p.value[i] = x0;
                const double numeric = (fp - fm) / (2.0 * h_);
                const double err = relative_error(analytic[k][i], numeric);
                ++res.checked;
                if (err > res.max_rel_error || res.worst.empty()) {
                    res.max_rel_error = std::max(res.max_rel_error, err);
                    res.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[k][i]) +
                                " numeric=" + std::to_string(numeric);
                }
            }
        }
        for (auto* p : params) p->zero_grad();
        return res;
    }

private:
    double h_;
};

} // namespace saml
