#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "saml/features/attention.hpp"
#include "saml/features/encoder.hpp"
#include "saml/numerics/init.hpp"

namespace saml {

/// Global and scenario-specific embedding tables for every field that owns a table.
///
/// The global table is [V x K_g]. The specific table stacks the N scenario slices as
/// [N*V x K_l]; scenario s reads rows s*V + id. Row 0 of every slice is the reserved
/// padding/OOV row: initialized to zero and never updated.
class DualEmbedding {
public:
    struct Tables {
        Parameter* global = nullptr;
        Parameter* specific = nullptr;  // null when the scenario subspace is disabled
        std::size_t vocab = 0;
    };

    DualEmbedding() = default;

    DualEmbedding(const FeatureSchema& schema, ParameterStore& store, bool with_specific, std::mt19937_64& rng,
                  double init_std = 0.01)
        : num_scenarios_(schema.num_scenarios) {
        for (const auto& f : schema.fields) {
            if (f.name == schema.scenario_field || f.kind == FieldKind::Numerical || !f.shares.empty()) continue;
            Tables t;
            t.vocab = f.vocab_size;
            Tensor g = init::normal({f.vocab_size, schema.global_dim}, init_std, rng);
            std::fill_n(g.data(), schema.global_dim, 0.0);
            t.global = &store.add("emb/global/" + f.name, std::move(g), true);
            if (with_specific) {
                Tensor s = init::normal({num_scenarios_ * f.vocab_size, schema.specific_dim}, init_std, rng);
                for (std::size_t sc = 0; sc < num_scenarios_; ++sc)
                    std::fill_n(s.data() + sc * f.vocab_size * schema.specific_dim, schema.specific_dim, 0.0);
                t.specific = &store.add("emb/specific/" + f.name, std::move(s), true);
            }
            tables_[f.name] = t;
        }
    }

    const Tables& tables_for(const FeatureSchema& schema, const FieldSpec& f) const {
        const std::string& owner = f.shares.empty() ? f.name : f.shares;
        auto it = tables_.find(owner);
        if (it == tables_.end()) throw ConfigError("no embedding tables for field '" + owner + "'");
        (void)schema;
        return it->second;
    }

    bool has_specific() const { return !tables_.empty() && tables_.begin()->second.specific != nullptr; }

    /// Global vectors for a list of ids: [ids.size() x K_g].
    Var lookup_global(Tape& tape, const Tables& t, const std::vector<std::size_t>& ids) const {
        std::vector<char> frozen(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) frozen[i] = ids[i] == 0;
        return embedding_lookup(tape, *t.global, ids, frozen);
    }

    /// Scenario-specific vectors: row i reads slice scenario[i / per_sample].
    Var lookup_specific(Tape& tape, const Tables& t, const std::vector<std::size_t>& ids,
                        const std::vector<std::size_t>& scenario, std::size_t per_sample) const {
        if (!t.specific) throw ConfigError("scenario-specific embeddings are disabled for this model");
        std::vector<std::size_t> rows(ids.size());
        std::vector<char> frozen(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::size_t s = scenario[i / per_sample];
            if (s >= num_scenarios_) throw DataError("scenario id " + std::to_string(s) + " out of range");
            rows[i] = s * t.vocab + ids[i];
            frozen[i] = ids[i] == 0;
        }
        return embedding_lookup(tape, *t.specific, rows, frozen);
    }

private:
    std::size_t num_scenarios_ = 0;
    std::map<std::string, Tables> tables_;
};

/// Per-field embedding outputs for a batch.
struct DualEmbeddingOutput {
    std::vector<Var> global_fields;    // per categorical field, [B x K_g]
    std::vector<Var> specific_fields;  // per categorical field, [B x K_l]; empty without the scenario subspace
    std::optional<Var> global_seq;     // [B*L x K_g], sum over sequence sub-fields
    std::optional<Var> specific_seq;   // [B*L x K_l]
};

inline DualEmbeddingOutput embed_dual(Tape& tape, const FeatureSchema& schema, const DualEmbedding& tables,
                                      const EncodedBatch& batch) {
    DualEmbeddingOutput out;
    const auto cats = schema.categorical_fields();
    for (std::size_t f = 0; f < cats.size(); ++f) {
        const auto& t = tables.tables_for(schema, *cats[f]);
        out.global_fields.push_back(tables.lookup_global(tape, t, batch.cat_ids[f]));
        if (tables.has_specific())
            out.specific_fields.push_back(tables.lookup_specific(tape, t, batch.cat_ids[f], batch.scenario, 1));
    }
    const auto seqs = schema.sequence_fields();
    for (std::size_t f = 0; f < seqs.size(); ++f) {
        const auto& t = tables.tables_for(schema, *seqs[f]);
        Var g = tables.lookup_global(tape, t, batch.seq_ids[f]);
        out.global_seq = out.global_seq ? add(*out.global_seq, g) : g;
        if (tables.has_specific()) {
            Var s = tables.lookup_specific(tape, t, batch.seq_ids[f], batch.scenario, batch.seq_len);
            out.specific_seq = out.specific_seq ? add(*out.specific_seq, s) : s;
        }
    }
    return out;
}

/// Scenario-independent and (optionally) scenario-dependent feature vectors.
struct FeatureVectors {
    Var independent;
    std::optional<Var> dependent;
    std::shared_ptr<const std::vector<double>> global_attention;
    std::shared_ptr<const std::vector<double>> scenario_attention;
};

/// Embedding + attention in the global and scenario-specific subspaces.
///
/// Widths, with C embedded categorical fields, n numerical fields and a = K_g when the
/// schema has a behavior sequence (else 0):
///   independent = C*K_g + n + a     [global field vectors | numericals | pooled global attention]
///   dependent   = C*K_l + n + a     [specific field vectors | numericals | pooled scenario attention]
/// The scenario attention takes Q and K from the specific sequence embeddings, lifted
/// from K_l to K_g by a shared linear map, and V from the global sequence embeddings.
class ScenarioAwareFeatures {
public:
    ScenarioAwareFeatures() = default;

    ScenarioAwareFeatures(FeatureSchema schema, ParameterStore& store, bool with_specific, std::size_t heads,
                          std::mt19937_64& rng)
        : schema_(std::move(schema)), with_specific_(with_specific) {
        schema_.validate();
        tables_ = DualEmbedding(schema_, store, with_specific, rng);
        has_seq_ = !schema_.sequence_fields().empty();
        if (has_seq_) {
            global_attn_ = AttentionParams::create(store, "attn/global", schema_.global_dim, heads, rng);
            if (with_specific) {
                lift_ = &store.add("attn/scenario/lift", init::xavier_uniform(schema_.specific_dim, schema_.global_dim, rng));
                scenario_attn_ = AttentionParams::create(store, "attn/scenario", schema_.global_dim, heads, rng);
            }
        }
    }

    const FeatureSchema& schema() const noexcept { return schema_; }
    bool with_specific() const noexcept { return with_specific_; }

    std::size_t independent_width() const {
        return schema_.categorical_fields().size() * schema_.global_dim + schema_.numerical_fields().size() +
               (has_seq_ ? schema_.global_dim : 0);
    }
    std::size_t dependent_width() const {
        return schema_.categorical_fields().size() * schema_.specific_dim + schema_.numerical_fields().size() +
               (has_seq_ ? schema_.global_dim : 0);
    }

    FeatureVectors build(Tape& tape, const EncodedBatch& batch) const {
        if (batch.cat_ids.size() != schema_.categorical_fields().size() ||
            batch.seq_ids.size() != schema_.sequence_fields().size() ||
            batch.num_numeric != schema_.numerical_fields().size() || batch.seq_len != schema_.max_seq_len)
            throw DimensionError("batch was encoded under a different schema");
        auto emb = embed_dual(tape, schema_, tables_, batch);
        std::optional<Var> numeric;
        if (batch.num_numeric > 0) numeric = tape.constant(Tensor(Shape{batch.size, batch.num_numeric}, batch.numeric));

        FeatureVectors fv;
        std::vector<Var> ind = emb.global_fields;
        if (numeric) ind.push_back(*numeric);
        if (has_seq_) {
            auto att = multi_head_attention(tape, global_attn_, *emb.global_seq, *emb.global_seq, *emb.global_seq,
                                            batch.mask, batch.size, batch.seq_len);
            ind.push_back(masked_mean_pool(att.out, batch.mask, batch.size, batch.seq_len));
            fv.global_attention = att.weights;
        }
        fv.independent = concat_cols(ind);
        if (with_specific_) {
            std::vector<Var> dep = emb.specific_fields;
            if (numeric) dep.push_back(*numeric);
            if (has_seq_) {
                Var lifted = matmul(*emb.specific_seq, tape.param(*lift_));
                auto att = multi_head_attention(tape, scenario_attn_, lifted, lifted, *emb.global_seq, batch.mask,
                                                batch.size, batch.seq_len);
                dep.push_back(masked_mean_pool(att.out, batch.mask, batch.size, batch.seq_len));
                fv.scenario_attention = att.weights;
            }
            fv.dependent = concat_cols(dep);
        }
        return fv;
    }

    const AttentionParams& global_attention() const { return global_attn_; }
    const AttentionParams& scenario_attention() const { return scenario_attn_; }
    const DualEmbedding& tables() const { return tables_; }

private:
    FeatureSchema schema_;
    bool with_specific_ = true;
    bool has_seq_ = false;
    DualEmbedding tables_;
    AttentionParams global_attn_;
    AttentionParams scenario_attn_;
    Parameter* lift_ = nullptr;
};

} // namespace saml
