#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saml/model/mutual.hpp"

namespace saml {

inline constexpr const char* kTraceFormat = "saml-mutual-trace/1";

/// Running statistics of the mutual unit, conditioned on the owning branch: a sample
/// of scenario i contributes g_i and the row alpha_i. to branch i's statistics.
class MutualTrace {
public:
    static constexpr std::size_t kBins = 20;

    MutualTrace() = default;
    explicit MutualTrace(std::size_t branches)
        : n_(branches), count_(branches, 0), gate_sum_(branches, 0.0), alpha_sum_(branches * branches, 0.0),
          hist_(branches * kBins, 0) {}

    std::size_t branches() const noexcept { return n_; }

    void accumulate(const MutualRecord& r, const std::vector<std::size_t>& owner) {
        if (r.branches != n_)
            throw DimensionError("mutual trace: record has " + std::to_string(r.branches) + " branches, trace has " +
                                 std::to_string(n_));
        if (owner.size() != r.batch) throw DimensionError("mutual trace: owner list length mismatch");
        for (std::size_t t = 0; t < r.batch; ++t) {
            const std::size_t i = owner[t];
            if (i >= n_) throw DimensionError("mutual trace: owner out of range");
            const double g = r.gate_at(t, i);
            ++count_[i];
            gate_sum_[i] += g;
            for (std::size_t j = 0; j < n_; ++j) alpha_sum_[i * n_ + j] += r.alpha_at(t, i, j);
            const std::size_t bin = std::min(kBins - 1, static_cast<std::size_t>(g * kBins));
            ++hist_[i * kBins + bin];
        }
    }

    std::size_t count(std::size_t i) const { return count_.at(i); }
    double mean_gate(std::size_t i) const { return count_.at(i) ? gate_sum_[i] / static_cast<double>(count_[i]) : 0.0; }
    double mean_alpha(std::size_t i, std::size_t j) const {
        return count_.at(i) ? alpha_sum_[i * n_ + j] / static_cast<double>(count_[i]) : 0.0;
    }
    /// Symmetric pair similarity: the average of mean alpha_ij and mean alpha_ji.
    double pair_alpha(std::size_t i, std::size_t j) const { return 0.5 * (mean_alpha(i, j) + mean_alpha(j, i)); }
    std::size_t histogram(std::size_t i, std::size_t bin) const { return hist_.at(i * kBins + bin); }

    nlohmann::json to_json() const {
        nlohmann::json branches = nlohmann::json::array();
        for (std::size_t i = 0; i < n_; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < n_; ++j) row.push_back(mean_alpha(i, j));
            nlohmann::json hist = nlohmann::json::array();
            for (std::size_t b = 0; b < kBins; ++b) hist.push_back(histogram(i, b));
            branches.push_back({{"branch", i},
                                {"samples", count_[i]},
                                {"mean_gate", count_[i] ? nlohmann::json(mean_gate(i)) : nlohmann::json(nullptr)},
                                {"gate_histogram", hist},
                                {"mean_alpha", count_[i] ? row : nlohmann::json(nullptr)}});
        }
        return {{"format", kTraceFormat}, {"bins", kBins}, {"branches", branches}};
    }

    void export_to(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open '" + path + "' for writing");
        f << to_json().dump(2) << '\n';
    }

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> count_;
    std::vector<double> gate_sum_;
    std::vector<double> alpha_sum_;
    std::vector<std::size_t> hist_;
};

} // namespace saml
