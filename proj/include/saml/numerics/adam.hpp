#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "saml/numerics/parameter.hpp"

namespace saml {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction.
///
/// Updates are lazy: a dense parameter whose gradient is identically zero this step
/// is left untouched (moments included), and sparse tables only update the rows
/// looked up in the batch. Each dense parameter and each sparse row keeps its own
/// step count for bias correction, so a branch that sees no samples of its scenario
/// does not drift on stale momentum.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const noexcept { return cfg_; }
    std::uint64_t step_count() const noexcept { return step_; }

    struct Slot {
        Tensor m;
        Tensor v;
        std::vector<std::uint64_t> steps;  // one per row when sparse, else a single entry
    };

    void step(ParameterStore& params) {
        ++step_;
        for (auto& p : params) update(*p);
    }

    void update(Parameter& p) {
        if (p.grad.shape() != p.value.shape())
            throw DimensionError("adam: gradient " + shape_str(p.grad.shape()) + " vs parameter " +
                                 shape_str(p.value.shape()) + " for " + p.name);
        Slot& s = slot(p);
        if (p.sparse) {
            const std::size_t w = p.value.cols();
            for (auto r : p.touched_rows) apply(p, s, r * w, (r + 1) * w, s.steps[r]);
            return;
        }
        bool any = false;
        for (double g : p.grad.values())
            if (g != 0.0) {
                any = true;
                break;
            }
        if (any) apply(p, s, 0, p.value.size(), s.steps[0]);
    }

    const Slot* find(const std::string& name) const {
        auto it = slots_.find(name);
        return it == slots_.end() ? nullptr : &it->second;
    }

private:
    Slot& slot(const Parameter& p) {
        auto it = slots_.find(p.name);
        if (it != slots_.end()) {
            if (it->second.m.shape() != p.value.shape())
                throw DimensionError("adam: moment shape drift for " + p.name);
            return it->second;
        }
        Slot s{Tensor(p.value.shape()), Tensor(p.value.shape()),
               std::vector<std::uint64_t>(p.sparse ? p.value.rows() : 1, 0)};
        return slots_.emplace(p.name, std::move(s)).first->second;
    }

    void apply(Parameter& p, Slot& s, std::size_t begin, std::size_t end, std::uint64_t& t) {
        ++t;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
        double* x = p.value.data();
        const double* g = p.grad.data();
        double* m = s.m.data();
        double* v = s.v.data();
        for (std::size_t i = begin; i < end; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = m[i] / c1;
            const double vh = v[i] / c2;
            x[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }

    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::map<std::string, Slot> slots_;
};

} // namespace saml
