#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "saml/features/representation.hpp"
#include "saml/model/loss.hpp"
#include "saml/model/mutual.hpp"
#include "saml/numerics/adam.hpp"

namespace saml {

enum class VariantKind { Full, NoGate, NoAux, NoGateMut, UnifiedBaseline, IndividualBaseline };

inline const std::vector<std::pair<VariantKind, std::string>>& variant_names() {
    static const std::vector<std::pair<VariantKind, std::string>> names{
        {VariantKind::Full, "full"},
        {VariantKind::NoGate, "no_gate"},
        {VariantKind::NoAux, "no_aux"},
        {VariantKind::NoGateMut, "no_gate_mut"},
        {VariantKind::UnifiedBaseline, "unified_baseline"},
        {VariantKind::IndividualBaseline, "individual_baseline"},
    };
    return names;
}

inline std::string to_string(VariantKind k) {
    for (const auto& [kind, name] : variant_names())
        if (kind == k) return name;
    return "unknown";
}

inline VariantKind parse_variant(const std::string& s) {
    for (const auto& [kind, name] : variant_names())
        if (name == s) return kind;
    throw ConfigError("unknown variant '" + s + "'");
}

/// Structural switches implied by a variant.
struct VariantTraits {
    bool specific = true;   // scenario-specific subspace
    bool branched = true;   // N branches instead of one MLP
    bool aux = true;        // auxiliary network and its injection
    bool mutual = true;     // mutual unit between branches
};

inline VariantTraits traits_of(VariantKind k) {
    switch (k) {
    case VariantKind::Full: return {true, true, true, true};
    case VariantKind::NoGate: return {true, true, true, false};
    case VariantKind::NoAux: return {true, true, false, true};
    case VariantKind::NoGateMut: return {true, false, false, false};
    case VariantKind::UnifiedBaseline:
    case VariantKind::IndividualBaseline: return {false, false, false, false};
    }
    throw ConfigError("unknown variant");
}

struct ModelConfig {
    VariantKind variant = VariantKind::Full;
    std::vector<std::size_t> hidden{128, 64};
    std::size_t heads = 4;
    std::size_t mutual_layer = 1;  // 1-based hidden layer after which the mutual unit runs
    double gate_bias_init = -2.0;
    double target_weight = 1.0;
    std::optional<double> gate_override;
    std::uint64_t seed = 0;
};

/// Fully connected layer, out = x W + b.
struct Dense {
    Parameter* w = nullptr;
    Parameter* b = nullptr;

    static Dense create(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                        std::mt19937_64& rng) {
        Dense d;
        d.w = &store.add(prefix + "/w", init::xavier_uniform(in, out, rng));
        d.b = &store.add(prefix + "/b", Tensor(Shape{1, out}));
        return d;
    }

    std::size_t in() const { return w->value.rows(); }
    std::size_t out() const { return w->value.cols(); }

    Var apply(Tape& tape, Var x) const {
        if (x.value().cols() != in())
            throw ConfigError("layer " + w->name + " expects width " + std::to_string(in()) + ", got " +
                              std::to_string(x.value().cols()));
        return add(matmul(x, tape.param(*w)), tape.param(*b));
    }
};

struct ForwardOutput {
    Var probs;                      // [B x N] per-branch probabilities, or [B x 1] for a single head
    Var owner_prob;                 // [B x 1]
    std::optional<Var> aux_prob;    // [B x 1]
    std::vector<Var> aux_hidden;    // V_a^1..V_a^depth
    std::vector<Var> branch_hidden; // per branch, the hidden at the mutual layer after mixing
    std::shared_ptr<const MutualRecord> mutual;
};

struct Prediction {
    std::vector<double> prob;
    std::shared_ptr<const MutualRecord> mutual;
};

/// Common interface of trainable CTR models.
class CtrModel {
public:
    virtual ~CtrModel() = default;
    virtual VariantKind kind() const = 0;
    virtual const FeatureSchema& schema() const = 0;
    virtual const ModelConfig& config() const = 0;
    virtual Prediction predict_detailed(const EncodedBatch& batch) const = 0;
    virtual std::vector<std::pair<std::string, Parameter*>> named_parameters() = 0;

    std::vector<double> predict(const EncodedBatch& batch) const { return predict_detailed(batch).prob; }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& [name, p] : named_parameters()) n += p->value.size();
        return n;
    }
};

/// Scenario-aware model covering every variant except the per-scenario baseline.
///
/// Branched variants run N MLPs on every sample. Layer l of branch i is
///   relu([V_i^{l-1}, stop_gradient(V_a^l)] W_i^l + b_i^l)
/// when the auxiliary network is present, and relu(V_i^{l-1} W_i^l + b_i^l) otherwise.
/// After `mutual_layer` the mutual unit mixes the branch hiddens.
class SamlModel final : public CtrModel {
public:
    SamlModel(FeatureSchema schema, ModelConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.variant == VariantKind::IndividualBaseline)
            throw ConfigError("individual_baseline is built from per-scenario unified models");
        traits_ = traits_of(cfg_.variant);
        if (cfg_.hidden.empty()) throw ConfigError("at least one hidden layer is required");
        for (auto w : cfg_.hidden)
            if (w == 0) throw ConfigError("hidden widths must be positive");
        if (traits_.mutual && (cfg_.mutual_layer < 1 || cfg_.mutual_layer > cfg_.hidden.size()))
            throw ConfigError("mutual_layer must lie in [1, " + std::to_string(cfg_.hidden.size()) + "]");
        std::mt19937_64 rng(cfg_.seed);
        features_ = ScenarioAwareFeatures(std::move(schema), store_, traits_.specific, cfg_.heads, rng);
        n_ = features_.schema().num_scenarios;
        const std::size_t ind = features_.independent_width();
        const std::size_t dep = traits_.specific ? features_.dependent_width() : 0;
        const std::size_t depth = cfg_.hidden.size();

        if (!traits_.branched) {
            std::size_t in = ind + dep;
            for (std::size_t l = 0; l < depth; ++l) {
                mlp_.push_back(Dense::create(store_, "mlp/layer" + std::to_string(l + 1), in, cfg_.hidden[l], rng));
                in = cfg_.hidden[l];
            }
            mlp_head_ = Dense::create(store_, "mlp/head", in, 1, rng);
            return;
        }
        if (traits_.aux) {
            std::size_t in = ind;
            for (std::size_t l = 0; l < depth; ++l) {
                aux_.push_back(Dense::create(store_, "aux/layer" + std::to_string(l + 1), in, cfg_.hidden[l], rng));
                in = cfg_.hidden[l];
            }
            aux_head_ = Dense::create(store_, "aux/head", in, 1, rng);
        }
        branches_.resize(n_);
        // All branches start from the same weights.
        const std::mt19937_64 branch_start = rng;
        for (std::size_t i = 0; i < n_; ++i) {
            rng = branch_start;
            const std::string p = "branch" + std::to_string(i);
            std::size_t in = traits_.aux ? dep : ind + dep;
            for (std::size_t l = 0; l < depth; ++l) {
                const std::size_t extra = traits_.aux ? cfg_.hidden[l] : 0;
                branches_[i].push_back(
                    Dense::create(store_, p + "/layer" + std::to_string(l + 1), in + extra, cfg_.hidden[l], rng));
                in = cfg_.hidden[l];
            }
            heads_.push_back(Dense::create(store_, p + "/head", in, 1, rng));
        }
        if (traits_.mutual) {
            const std::size_t d = cfg_.hidden[cfg_.mutual_layer - 1];
            for (std::size_t i = 0; i < n_; ++i) {
                const std::string p = "mutual/gate" + std::to_string(i);
                gate_w_.push_back(&store_.add(p + "/w", init::xavier_uniform(d, 1, rng).reshaped({d})));
                gate_b_.push_back(&store_.add(p + "/b", Tensor(Shape{1}, cfg_.gate_bias_init)));
            }
        }
    }

    VariantKind kind() const override { return cfg_.variant; }
    const FeatureSchema& schema() const override { return features_.schema(); }
    const ModelConfig& config() const override { return cfg_; }
    const VariantTraits& traits() const noexcept { return traits_; }
    const ScenarioAwareFeatures& features() const noexcept { return features_; }
    ParameterStore& params() noexcept { return store_; }
    const ParameterStore& params() const noexcept { return store_; }
    std::size_t num_scenarios() const noexcept { return n_; }

    /// Number of probability heads the target loss reads from (the auxiliary head excluded).
    std::size_t output_heads() const { return traits_.branched ? n_ : 1; }

    void set_gate_override(std::optional<double> g) { cfg_.gate_override = g; }

    std::vector<std::pair<std::string, Parameter*>> named_parameters() override {
        std::vector<std::pair<std::string, Parameter*>> out;
        for (auto& p : store_) out.emplace_back(p->name, p.get());
        return out;
    }

    ForwardOutput forward(Tape& tape, const EncodedBatch& batch) const {
        for (auto s : batch.scenario)
            if (s >= n_) throw DataError("scenario id " + std::to_string(s) + " out of range");
        FeatureVectors fv = features_.build(tape, batch);
        ForwardOutput out;
        if (!traits_.branched) {
            Var h = traits_.specific ? concat_cols({fv.independent, *fv.dependent}) : fv.independent;
            for (const auto& layer : mlp_) h = relu(layer.apply(tape, h));
            out.probs = sigmoid(mlp_head_.apply(tape, h));
            out.owner_prob = out.probs;
            return out;
        }

        std::vector<Var> injected;
        if (traits_.aux) {
            Var a = fv.independent;
            for (const auto& layer : aux_) {
                a = relu(layer.apply(tape, a));
                out.aux_hidden.push_back(a);
                injected.push_back(stop_gradient(a));
            }
            out.aux_prob = sigmoid(aux_head_.apply(tape, a));
        }

        Var x0 = traits_.aux ? *fv.dependent : concat_cols({fv.independent, *fv.dependent});
        std::vector<Var> h(n_, x0);
        for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
            for (std::size_t i = 0; i < n_; ++i) {
                Var in = traits_.aux ? concat_cols({h[i], injected[l]}) : h[i];
                h[i] = relu(branches_[i][l].apply(tape, in));
            }
            if (traits_.mutual && l + 1 == cfg_.mutual_layer) {
                Var stacked = concat_cols(h);
                Var frozen = stop_gradient(stacked);
                std::vector<Var> gw, gb;
                if (!cfg_.gate_override)
                    for (std::size_t i = 0; i < n_; ++i) {
                        gw.push_back(tape.param(*gate_w_[i]));
                        gb.push_back(tape.param(*gate_b_[i]));
                    }
                auto mixed = mutual_mix(stacked, frozen, gw, gb, batch.scenario, n_, cfg_.gate_override);
                out.mutual = mixed.record;
                const std::size_t d = cfg_.hidden[l];
                for (std::size_t i = 0; i < n_; ++i) h[i] = slice_cols(mixed.mixed, i * d, d);
                out.branch_hidden = h;
            }
        }
        std::vector<Var> logits;
        for (std::size_t i = 0; i < n_; ++i) logits.push_back(heads_[i].apply(tape, h[i]));
        out.probs = sigmoid(concat_cols(logits));
        out.owner_prob = select_per_row(out.probs, batch.scenario);
        return out;
    }

    LossTerms loss(Tape& tape, const EncodedBatch& batch, LossOptions opt = {}) const {
        opt.target_weight = cfg_.target_weight;
        auto fwd = forward(tape, batch);
        return total_loss(fwd.probs, fwd.aux_prob, batch.label, batch.scenario, n_, opt);
    }

    /// One forward, one backward, one optimizer step.
    LossReport train_step(const EncodedBatch& batch, Adam& opt) {
        store_.zero_grad();
        Tape tape;
        auto terms = loss(tape, batch);
        tape.backward(terms.total);
        opt.step(store_);
        return terms.report;
    }

    Prediction predict_detailed(const EncodedBatch& batch) const override {
        Tape tape;
        tape.set_inference(true);
        auto fwd = forward(tape, batch);
        const Tensor& p = fwd.owner_prob.value();
        return {std::vector<double>(p.values().begin(), p.values().end()), fwd.mutual};
    }

private:
    ModelConfig cfg_;
    VariantTraits traits_;
    std::size_t n_ = 0;
    ParameterStore store_;
    ScenarioAwareFeatures features_;
    std::vector<Dense> mlp_;
    Dense mlp_head_;
    std::vector<Dense> aux_;
    Dense aux_head_;
    std::vector<std::vector<Dense>> branches_;
    std::vector<Dense> heads_;
    std::vector<Parameter*> gate_w_, gate_b_;
};

/// One unified model per scenario, each trained on its own scenario's samples.
class IndividualModel final : public CtrModel {
public:
    IndividualModel(FeatureSchema schema, ModelConfig cfg) : cfg_(std::move(cfg)), schema_(std::move(schema)) {
        cfg_.variant = VariantKind::IndividualBaseline;
        for (std::size_t s = 0; s < schema_.num_scenarios; ++s) {
            ModelConfig m = cfg_;
            m.variant = VariantKind::UnifiedBaseline;
            m.seed = cfg_.seed + 7919 * (s + 1);
            members_.push_back(std::make_unique<SamlModel>(schema_, m));
        }
    }

    VariantKind kind() const override { return VariantKind::IndividualBaseline; }
    const FeatureSchema& schema() const override { return schema_; }
    const ModelConfig& config() const override { return cfg_; }
    std::size_t size() const noexcept { return members_.size(); }
    SamlModel& member(std::size_t s) { return *members_.at(s); }
    const SamlModel& member(std::size_t s) const { return *members_.at(s); }

    std::vector<std::pair<std::string, Parameter*>> named_parameters() override {
        std::vector<std::pair<std::string, Parameter*>> out;
        for (std::size_t s = 0; s < members_.size(); ++s)
            for (auto& [name, p] : members_[s]->named_parameters())
                out.emplace_back("scenario" + std::to_string(s) + "/" + name, p);
        return out;
    }

    Prediction predict_detailed(const EncodedBatch& batch) const override {
        Prediction out;
        out.prob.assign(batch.size, 0.0);
        std::vector<std::vector<std::size_t>> rows(members_.size());
        for (std::size_t t = 0; t < batch.size; ++t) {
            if (batch.scenario[t] >= members_.size())
                throw DataError("scenario id " + std::to_string(batch.scenario[t]) + " out of range");
            rows[batch.scenario[t]].push_back(t);
        }
        for (std::size_t s = 0; s < members_.size(); ++s) {
            if (rows[s].empty()) continue;
            auto p = members_[s]->predict(batch.subset(rows[s]));
            for (std::size_t k = 0; k < rows[s].size(); ++k) out.prob[rows[s][k]] = p[k];
        }
        return out;
    }

private:
    ModelConfig cfg_;
    FeatureSchema schema_;
    std::vector<std::unique_ptr<SamlModel>> members_;
};

inline std::unique_ptr<CtrModel> make_variant(const FeatureSchema& schema, ModelConfig cfg) {
    if (cfg.variant == VariantKind::IndividualBaseline) return std::make_unique<IndividualModel>(schema, cfg);
    return std::make_unique<SamlModel>(schema, cfg);
}

} // namespace saml
