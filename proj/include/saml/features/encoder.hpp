#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "saml/features/schema.hpp"

namespace saml {

/// One impression. Values are keyed by field name; each behavior item maps
/// sequence-field names to ids, newest item first.
struct ExampleRecord {
    std::map<std::string, std::int64_t> categorical;
    std::map<std::string, double> numerical;
    std::vector<std::map<std::string, std::int64_t>> behavior;
    std::int64_t scenario = 0;
    std::int64_t ts = 0;
    int label = 0;

    bool operator==(const ExampleRecord&) const = default;
};

/// Checks a record against a schema. Out-of-vocabulary ids are accepted here (they
/// encode to the reserved index 0); missing fields, labels outside {0,1}, scenarios
/// outside [0, N) and over-long behavior sequences are not.
inline void validate_record(const FeatureSchema& schema, const ExampleRecord& r) {
    if (r.label != 0 && r.label != 1) throw DataError("label must be 0 or 1, got " + std::to_string(r.label));
    if (r.scenario < 0 || static_cast<std::size_t>(r.scenario) >= schema.num_scenarios)
        throw DataError("field '" + schema.scenario_field + "': scenario " + std::to_string(r.scenario) +
                        " outside [0, " + std::to_string(schema.num_scenarios) + ")");
    for (const auto* f : schema.categorical_fields())
        if (!r.categorical.count(f->name)) throw DataError("missing categorical field '" + f->name + "'");
    for (const auto* f : schema.numerical_fields()) {
        auto it = r.numerical.find(f->name);
        if (it == r.numerical.end()) throw DataError("missing numerical field '" + f->name + "'");
        if (!std::isfinite(it->second)) throw DataError("field '" + f->name + "' is not finite");
    }
    if (r.behavior.size() > schema.max_seq_len)
        throw DataError("behavior sequence of length " + std::to_string(r.behavior.size()) + " exceeds max_seq_len " +
                        std::to_string(schema.max_seq_len));
    const auto seq = schema.sequence_fields();
    for (const auto& item : r.behavior) {
        for (const auto* f : seq)
            if (!item.count(f->name)) throw DataError("behavior item missing field '" + f->name + "'");
        for (const auto& [k, _] : item) {
            bool known = false;
            for (const auto* f : seq) known = known || f->name == k;
            if (!known) throw DataError("behavior item has unknown field '" + k + "'");
        }
    }
    for (const auto& [k, _] : r.categorical)
        if (!schema.has_field(k) || schema.field(k).kind != FieldKind::Categorical || k == schema.scenario_field)
            throw DataError("unknown categorical field '" + k + "'");
    for (const auto& [k, _] : r.numerical)
        if (!schema.has_field(k) || schema.field(k).kind != FieldKind::Numerical)
            throw DataError("unknown numerical field '" + k + "'");
}

/// Mean and standard deviation per numerical field, from the training split.
struct NumericStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    static NumericStats fit(const FeatureSchema& schema, std::span<const ExampleRecord> train) {
        const auto fields = schema.numerical_fields();
        NumericStats s;
        s.mean.assign(fields.size(), 0.0);
        s.stddev.assign(fields.size(), 1.0);
        if (train.empty()) return s;
        const double n = static_cast<double>(train.size());
        for (std::size_t k = 0; k < fields.size(); ++k) {
            double m = 0.0;
            for (const auto& r : train) m += r.numerical.at(fields[k]->name);
            m /= n;
            double v = 0.0;
            for (const auto& r : train) {
                const double d = r.numerical.at(fields[k]->name) - m;
                v += d * d;
            }
            v /= n;
            s.mean[k] = m;
            s.stddev[k] = v > 0.0 ? std::sqrt(v) : 1.0;
        }
        return s;
    }
};

/// A record in model-ready form.
struct EncodedExample {
    std::vector<std::size_t> cat_ids;               // one per embedded categorical field
    std::vector<double> numeric;                    // z-scored, one per numerical field
    std::vector<std::vector<std::size_t>> seq_ids;  // per sequence field, length L, 0-padded
    std::vector<char> mask;                         // length L, 1 on valid positions
    std::size_t seq_len = 0;
    std::size_t scenario = 0;
    int label = 0;
};

/// Maps records to EncodedExample under a fixed schema and normalization.
class Encoder {
public:
    Encoder(FeatureSchema schema, NumericStats stats) : schema_(std::move(schema)), stats_(std::move(stats)) {
        schema_.validate();
        if (stats_.mean.size() != schema_.numerical_fields().size())
            throw ConfigError("encoder: numeric statistics do not match the schema");
    }

    const FeatureSchema& schema() const noexcept { return schema_; }
    const NumericStats& stats() const noexcept { return stats_; }

    /// Sequences longer than the schema's L keep their first (newest) L items.
    EncodedExample encode(const ExampleRecord& r) const {
        if (r.scenario < 0 || static_cast<std::size_t>(r.scenario) >= schema_.num_scenarios)
            throw DataError("scenario " + std::to_string(r.scenario) + " outside [0, " +
                            std::to_string(schema_.num_scenarios) + ")");
        if (r.label != 0 && r.label != 1) throw DataError("label must be 0 or 1");
        EncodedExample e;
        e.scenario = static_cast<std::size_t>(r.scenario);
        e.label = r.label;
        for (const auto* f : schema_.categorical_fields()) {
            auto it = r.categorical.find(f->name);
            if (it == r.categorical.end()) throw DataError("missing categorical field '" + f->name + "'");
            e.cat_ids.push_back(clamp_id(it->second, f->vocab_size));
        }
        const auto nums = schema_.numerical_fields();
        for (std::size_t k = 0; k < nums.size(); ++k) {
            auto it = r.numerical.find(nums[k]->name);
            if (it == r.numerical.end()) throw DataError("missing numerical field '" + nums[k]->name + "'");
            e.numeric.push_back((it->second - stats_.mean[k]) / stats_.stddev[k]);
        }
        const std::size_t L = schema_.max_seq_len;
        e.seq_len = std::min(L, r.behavior.size());
        e.mask.assign(L, 0);
        for (std::size_t l = 0; l < e.seq_len; ++l) e.mask[l] = 1;
        for (const auto* f : schema_.sequence_fields()) {
            std::vector<std::size_t> ids(L, 0);
            const std::size_t vocab = schema_.table_vocab(*f);
            for (std::size_t l = 0; l < e.seq_len; ++l) {
                auto it = r.behavior[l].find(f->name);
                if (it == r.behavior[l].end()) throw DataError("behavior item missing field '" + f->name + "'");
                ids[l] = clamp_id(it->second, vocab);
            }
            e.seq_ids.push_back(std::move(ids));
        }
        return e;
    }

    std::vector<EncodedExample> encode_all(std::span<const ExampleRecord> records) const {
        std::vector<EncodedExample> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(encode(r));
        return out;
    }

private:
    static std::size_t clamp_id(std::int64_t id, std::size_t vocab) {
        return (id <= 0 || static_cast<std::size_t>(id) >= vocab) ? 0 : static_cast<std::size_t>(id);
    }

    FeatureSchema schema_;
    NumericStats stats_;
};

/// Column-oriented batch assembled from encoded examples.
struct EncodedBatch {
    std::size_t size = 0;
    std::size_t seq_len = 0;                        // L
    std::vector<std::vector<std::size_t>> cat_ids;  // [field][sample]
    std::vector<double> numeric;                    // [sample * n_num + k]
    std::size_t num_numeric = 0;
    std::vector<std::vector<std::size_t>> seq_ids;  // [field][sample * L + pos]
    std::vector<char> mask;                         // [sample * L + pos]
    std::vector<std::size_t> scenario;
    std::vector<double> label;

    static EncodedBatch from(std::span<const EncodedExample* const> examples) {
        if (examples.empty()) throw ContractError("batch must be nonempty");
        EncodedBatch b;
        const auto& first = *examples.front();
        b.size = examples.size();
        b.seq_len = first.mask.size();
        b.num_numeric = first.numeric.size();
        b.cat_ids.assign(first.cat_ids.size(), {});
        b.seq_ids.assign(first.seq_ids.size(), {});
        for (auto& c : b.cat_ids) c.reserve(b.size);
        for (const auto* e : examples) {
            if (e->cat_ids.size() != b.cat_ids.size() || e->mask.size() != b.seq_len ||
                e->numeric.size() != b.num_numeric || e->seq_ids.size() != b.seq_ids.size())
                throw DimensionError("batch: examples encoded under different schemas");
            for (std::size_t f = 0; f < e->cat_ids.size(); ++f) b.cat_ids[f].push_back(e->cat_ids[f]);
            b.numeric.insert(b.numeric.end(), e->numeric.begin(), e->numeric.end());
            for (std::size_t f = 0; f < e->seq_ids.size(); ++f)
                b.seq_ids[f].insert(b.seq_ids[f].end(), e->seq_ids[f].begin(), e->seq_ids[f].end());
            b.mask.insert(b.mask.end(), e->mask.begin(), e->mask.end());
            b.scenario.push_back(e->scenario);
            b.label.push_back(static_cast<double>(e->label));
        }
        return b;
    }

    /// Rows `index` of this batch, in the given order.
    EncodedBatch subset(const std::vector<std::size_t>& index) const {
        EncodedBatch b;
        b.size = index.size();
        b.seq_len = seq_len;
        b.num_numeric = num_numeric;
        b.cat_ids.assign(cat_ids.size(), {});
        b.seq_ids.assign(seq_ids.size(), {});
        for (auto i : index) {
            if (i >= size) throw DimensionError("batch subset: row " + std::to_string(i) + " out of range");
            for (std::size_t f = 0; f < cat_ids.size(); ++f) b.cat_ids[f].push_back(cat_ids[f][i]);
            b.numeric.insert(b.numeric.end(), numeric.begin() + i * num_numeric,
                             numeric.begin() + (i + 1) * num_numeric);
            for (std::size_t f = 0; f < seq_ids.size(); ++f)
                b.seq_ids[f].insert(b.seq_ids[f].end(), seq_ids[f].begin() + i * seq_len,
                                    seq_ids[f].begin() + (i + 1) * seq_len);
            b.mask.insert(b.mask.end(), mask.begin() + i * seq_len, mask.begin() + (i + 1) * seq_len);
            b.scenario.push_back(scenario[i]);
            b.label.push_back(label[i]);
        }
        return b;
    }

    static EncodedBatch from(std::span<const EncodedExample> examples) {
        std::vector<const EncodedExample*> ptrs;
        for (const auto& e : examples) ptrs.push_back(&e);
        return from(std::span<const EncodedExample* const>(ptrs));
    }
};

} // namespace saml
