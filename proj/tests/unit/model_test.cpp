#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "saml/model/saml_model.hpp"
#include "saml/numerics/gradcheck.hpp"
#include "../oracles.hpp"
#include "../test_support.hpp"

using namespace saml;
using saml::testing::encode_batch;
using saml::testing::random_records;
using saml::testing::tiny_schema;

namespace {

using Vec = std::vector<double>;
using saml::testing::mutual_oracle;
using saml::testing::same_bits;

struct MutualCase {
    std::size_t n, d;
    std::vector<Vec> v, w;
    Vec b;
};

MutualCase random_case(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    std::normal_distribution<double> nd(0.0, 1.0);
    MutualCase c{n, d, {}, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        Vec x(d), y(d);
        for (auto& e : x) e = nd(rng);
        for (auto& e : y) e = 0.3 * nd(rng);
        c.v.push_back(x);
        c.w.push_back(y);
        c.b.push_back(nd(rng));
    }
    return c;
}

struct MutualRun {
    Tensor mixed;
    std::shared_ptr<const MutualRecord> record;
};

MutualRun run_mutual(const MutualCase& c, std::size_t owner, std::optional<double> gate = std::nullopt) {
    Tape tape;
    Vec flat;
    for (const auto& x : c.v) flat.insert(flat.end(), x.begin(), x.end());
    Var live = tape.variable(Tensor(Shape{1, c.n * c.d}, flat), true);
    std::vector<Var> gw, gb;
    for (std::size_t i = 0; i < c.n; ++i) {
        gw.push_back(tape.variable(Tensor(Shape{c.d}, c.w[i]), true));
        gb.push_back(tape.variable(Tensor::scalar(c.b[i]), true));
    }
    auto r = mutual_mix(live, stop_gradient(live), gw, gb, {owner}, c.n, gate);
    return {r.mixed.value(), r.record};
}

ModelConfig small_config(VariantKind k, std::uint64_t seed = 3) {
    ModelConfig c;
    c.variant = k;
    c.hidden = {6, 4};
    c.heads = 2;
    c.seed = seed;
    return c;
}

} // namespace

TEST(MutualUnit, MatchesStraightLineOracle) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng() % 5, d = 1 + rng() % 32;
        auto c = random_case(rng, n, d);
        auto run = run_mutual(c, rng() % n);
        auto o = mutual_oracle(c.v, c.w, c.b);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                EXPECT_NEAR(run.record->alpha_at(0, i, j), o.alpha[i][j], 1e-12);
                row += run.record->alpha_at(0, i, j);
            }
            EXPECT_NEAR(row, 1.0, 1e-9);
            EXPECT_NEAR(run.record->gate_at(0, i), o.gate[i], 1e-12);
            for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(run.mixed[i * d + k], o.mixed[i][k], 1e-12);
        }
    }
}

TEST(MutualUnit, IdenticalVectorsGiveEqualAlpha) {
    MutualCase c{3, 4, {{1, 2, 3, 4}, {1, 2, 3, 4}, {1, 2, 3, 4}}, {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}}, {0, 0, 0}};
    auto run = run_mutual(c, 0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_NEAR(run.record->alpha_at(0, i, j), i == j ? 0.0 : 0.5, 1e-15);
}

TEST(MutualUnit, OrthogonalVectorsFallBackToUniformRatios) {
    MutualCase c{3, 3, {{1, 0, 0}, {0, 2, 0}, {0, 0, 3}}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, {0, 0, 0}};
    auto run = run_mutual(c, 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) EXPECT_DOUBLE_EQ(run.record->alpha_at(0, i, j), 0.5);
}

TEST(MutualUnit, ZeroGateOverrideIsIdentity) {
    std::mt19937_64 rng(5);
    auto c = random_case(rng, 4, 7);
    auto run = run_mutual(c, 2, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(run.mixed[i * 7 + k], c.v[i][k]);
}

TEST(MutualUnit, TwoBranchHandCase) {
    // z_0 = 0.1 - 0.4 + 0.3 = 0 and z_1 = 1.5 - 1.5 = 0, so both gates are 0.5; alpha = 1.
    MutualCase c{2, 2, {{1, 2}, {3, 0.5}}, {{0.1, -0.2}, {0.5, 0.0}}, {0.3, -1.5}};
    auto run = run_mutual(c, 0);
    EXPECT_DOUBLE_EQ(run.record->alpha_at(0, 0, 1), 1.0);
    EXPECT_DOUBLE_EQ(run.record->gate_at(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(run.record->gate_at(0, 1), 0.5);
    EXPECT_NEAR(run.mixed[0], 2.5, 1e-15);
    EXPECT_NEAR(run.mixed[1], 2.25, 1e-15);
    EXPECT_NEAR(run.mixed[2], 3.5, 1e-15);
    EXPECT_NEAR(run.mixed[3], 1.5, 1e-15);
}

TEST(MutualUnit, SingleBranchIsBypassed) {
    Tape tape;
    Var v = tape.variable(Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
    auto r = mutual_mix(v, stop_gradient(v), {}, {}, {0, 0}, 1);
    EXPECT_EQ(r.mixed.id, v.id);
    EXPECT_EQ(r.record, nullptr);
}

TEST(MutualUnit, GradientMatchesFiniteDifferencesThroughOwnerPath) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 2 + rng() % 3, d = 1 + rng() % 5, batch = 3;
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<Tensor> inputs;
        Tensor live(Shape{batch, n * d});
        for (auto& x : live.storage()) x = nd(rng);
        inputs.push_back(live);
        for (std::size_t i = 0; i < n; ++i) {
            Tensor w(Shape{d});
            for (auto& x : w.storage()) x = 0.5 * nd(rng);
            inputs.push_back(w);
            inputs.push_back(Tensor::scalar(nd(rng)));
        }
        Tensor probe(Shape{batch, n * d});
        for (auto& x : probe.storage()) x = nd(rng);
        std::vector<std::size_t> owner;
        for (std::size_t t = 0; t < batch; ++t) owner.push_back(rng() % n);
        auto f = [&](Tape& tape, const std::vector<Var>& x) {
            std::vector<Var> gw, gb;
            for (std::size_t i = 0; i < n; ++i) {
                gw.push_back(x[1 + 2 * i]);
                gb.push_back(x[2 + 2 * i]);
            }
            auto r = mutual_mix(x[0], stop_gradient(x[0]), gw, gb, owner, n);
            return sum(mul(r.mixed, tape.constant(probe)));
        };
        auto res = GradientChecker().check(f, inputs);
        EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
    }
}

TEST(MutualUnit, NonOwnerBranchesReceiveNoGradient) {
    std::mt19937_64 rng(8);
    auto c = random_case(rng, 3, 4);
    Tape tape;
    Vec flat;
    for (const auto& x : c.v) flat.insert(flat.end(), x.begin(), x.end());
    Var live = tape.variable(Tensor(Shape{1, 12}, flat), true);
    std::vector<Var> gw, gb;
    for (std::size_t i = 0; i < 3; ++i) {
        gw.push_back(tape.variable(Tensor(Shape{4}, c.w[i]), true));
        gb.push_back(tape.variable(Tensor::scalar(c.b[i]), true));
    }
    auto r = mutual_mix(live, stop_gradient(live), gw, gb, {1}, 3);
    // Only the owner's output feeds the loss, as the masked loss does.
    tape.backward(sum(slice_cols(r.mixed, 4, 4)));
    const Tensor& g = tape.grad(live);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(g[k], 0.0);
        EXPECT_EQ(g[8 + k], 0.0);
        EXPECT_NE(g[4 + k], 0.0);
    }
    EXPECT_EQ(tape.grad(gw[0])[0], 0.0);
    EXPECT_EQ(tape.grad(gw[2])[0], 0.0);
}

TEST(Loss, HalfProbabilityGivesLn2) {
    Tape tape;
    Var probs = tape.constant(Tensor(Shape{4, 2}, 0.5));
    Var aux = tape.constant(Tensor(Shape{4, 1}, 0.5));
    auto t = total_loss(probs, aux, {1, 0, 1, 0}, {0, 1, 1, 0}, 2);
    EXPECT_NEAR(t.report.target, std::log(2.0), 1e-15);
    EXPECT_NEAR(t.report.aux, std::log(2.0), 1e-15);
    EXPECT_NEAR(t.report.total, 2 * std::log(2.0), 1e-15);
    EXPECT_EQ(t.report.scenario_counts, (std::vector<std::size_t>{2, 2}));
}

TEST(Loss, ExactPredictionIsClampScale) {
    Tape tape;
    Var probs = tape.constant(Tensor(Shape{2, 2}, {1.0, 0.3, 0.7, 0.0}));
    auto t = total_loss(probs, std::nullopt, {1, 0}, {0, 1}, 2);
    EXPECT_GT(t.report.target, 0.0);
    EXPECT_LT(t.report.target, 2e-7);
}

TEST(Loss, MatchesScalarReference) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    const std::size_t b = 9, n = 3;
    Tensor p(Shape{b, n}), a(Shape{b, 1});
    for (auto& x : p.storage()) x = u(rng);
    for (auto& x : a.storage()) x = u(rng);
    std::vector<double> y;
    std::vector<std::size_t> s;
    for (std::size_t t = 0; t < b; ++t) {
        y.push_back(double(rng() % 2));
        s.push_back(rng() % n);
    }
    double lt = 0.0, la = 0.0;
    for (std::size_t t = 0; t < b; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double ind = s[t] == i ? 1.0 : 0.0;
            const double q = p.at(t, i);
            lt += ind * -(y[t] * std::log(q) + (1 - y[t]) * std::log(1 - q));
        }
        la += -(y[t] * std::log(a[t]) + (1 - y[t]) * std::log(1 - a[t]));
    }
    Tape tape;
    auto terms = total_loss(tape.constant(p), tape.constant(a), y, s, n);
    EXPECT_NEAR(terms.report.target, lt / b, 1e-12);
    EXPECT_NEAR(terms.report.aux, la / b, 1e-12);
    EXPECT_NEAR(terms.total.value().item(), (lt + la) / b, 1e-12);
}

TEST(Loss, ScenarioOutOfRangeIsRejected) {
    Tape tape;
    Var probs = tape.constant(Tensor(Shape{1, 2}, 0.5));
    EXPECT_THROW(total_loss(probs, std::nullopt, {1}, {2}, 2), DataError);
}

TEST(DenseStack, HandSizedForward) {
    // 3 -> 2 -> 1 with relu, then a sigmoid head.
    ParameterStore store;
    std::mt19937_64 rng(0);
    auto l1 = Dense::create(store, "l1", 3, 2, rng);
    auto l2 = Dense::create(store, "l2", 2, 1, rng);
    l1.w->value = Tensor(Shape{3, 2}, {1, -1, 0.5, 2, -1, 0});
    l1.b->value = Tensor(Shape{1, 2}, {0.5, -0.5});
    l2.w->value = Tensor(Shape{2, 1}, {2, -1});
    l2.b->value = Tensor(Shape{1, 1}, {-4});
    Tape tape;
    Var x = tape.constant(Tensor(Shape{1, 3}, {1, 2, 3}));
    // h = relu([1 + 1 - 3 + 0.5, -1 + 4 + 0 - 0.5]) = [0, 2.5]; logit = -2.5 - 4 = -6.5
    Var h = relu(l1.apply(tape, x));
    Var p = sigmoid(l2.apply(tape, h));
    EXPECT_DOUBLE_EQ(h.value()[0], 0.0);
    EXPECT_DOUBLE_EQ(h.value()[1], 2.5);
    EXPECT_NEAR(p.value()[0], 1.0 / (1.0 + std::exp(6.5)), 1e-15);
    EXPECT_THROW(l2.apply(tape, x), ConfigError);
}

TEST(Model, ZeroAuxNetworkPredictsHalf) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    for (auto& p : m.params())
        if (p->name.rfind("aux/", 0) == 0) p->value.fill(0.0);
    auto batch = encode_batch(schema, random_records(schema, 5, 1));
    Tape tape;
    auto out = m.forward(tape, batch);
    for (double v : out.aux_prob->value().values()) EXPECT_EQ(v, 0.5);
}

TEST(Model, ZeroHeadsPredictHalf) {
    auto schema = tiny_schema();
    for (auto k : {VariantKind::Full, VariantKind::NoAux, VariantKind::UnifiedBaseline}) {
        SamlModel m(schema, small_config(k));
        for (auto& p : m.params())
            if (p->name.find("head") != std::string::npos) p->value.fill(0.0);
        for (double v : m.predict(encode_batch(schema, random_records(schema, 6, 2)))) EXPECT_EQ(v, 0.5);
    }
}

TEST(Model, EndToEndGradientMatchesFiniteDifferences) {
    auto schema = tiny_schema(2, 3, 4, 2);
    auto records = random_records(schema, 6, 12);
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].scenario = static_cast<std::int64_t>(i % 2);
        while (records[i].behavior.size() < 3) records[i].behavior.push_back(records[i].behavior.empty()
                                                                                 ? std::map<std::string, std::int64_t>{{"hist_item_id", 3}, {"hist_item_cat", 2}}
                                                                                 : records[i].behavior.front());
    }
    auto batch = encode_batch(schema, records);
    for (auto k : {VariantKind::Full, VariantKind::NoGate, VariantKind::NoAux, VariantKind::NoGateMut,
                   VariantKind::UnifiedBaseline}) {
        auto cfg = small_config(k, 9);
        cfg.hidden = {5, 3};
        cfg.gate_bias_init = 0.0;
        SamlModel m(schema, cfg);
        // Random biases keep every relu away from its kink.
        std::mt19937_64 rng(2);
        std::normal_distribution<double> nd(0.0, 0.2);
        std::vector<Parameter*> params;
        for (auto& p : m.params()) {
            if (p->name.size() > 2 && p->name.substr(p->name.size() - 2) == "/b")
                for (auto& x : p->value.storage()) x += nd(rng);
            params.push_back(p.get());
        }
        auto res = GradientChecker().check_parameters([&](Tape& t) { return m.loss(t, batch).total; }, params, 8, 1);
        EXPECT_LT(res.max_rel_error, 1e-3) << to_string(k) << ": " << res.worst;
        EXPECT_GT(res.checked, 50u);
    }
}

TEST(Model, TrainingOnOneScenarioLeavesOtherBranchesUntouched) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    Adam opt(AdamConfig{0.01});
    // Warm up on mixed data so every moment buffer is populated.
    for (int s = 0; s < 3; ++s) m.train_step(encode_batch(schema, random_records(schema, 16, 30 + s)), opt);
    std::map<std::string, Tensor> before;
    for (auto& p : m.params()) before[p->name] = p->value;
    auto batch = encode_batch(schema, random_records(schema, 16, 40, 0));
    for (int s = 0; s < 3; ++s) m.train_step(batch, opt);
    for (auto& p : m.params()) {
        const std::string& name = p->name;
        const bool other_branch = name.rfind("branch1/", 0) == 0 || name.rfind("branch2/", 0) == 0 ||
                                  name.rfind("mutual/gate1/", 0) == 0 || name.rfind("mutual/gate2/", 0) == 0;
        if (other_branch) EXPECT_TRUE(same_bits(p->value, before[name])) << name;
        if (name.rfind("branch0/", 0) == 0) EXPECT_FALSE(same_bits(p->value, before[name])) << name;
        if (name.rfind("emb/specific/", 0) == 0) {
            const std::string field = name.substr(13);
            const std::size_t v = schema.field(field).vocab_size, w = p->value.cols();
            for (std::size_t r = v; r < p->value.rows(); ++r)
                for (std::size_t c = 0; c < w; ++c) ASSERT_EQ(p->value.at(r, c), before[name].at(r, c)) << name;
        }
    }
}

TEST(Model, BranchGradientsEqualPerScenarioSubBatchGradients) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    auto batch = encode_batch(schema, random_records(schema, 24, 50));
    const double norm = static_cast<double>(batch.size);
    auto grads = [&](const EncodedBatch& b) {
        m.params().zero_grad();
        Tape tape;
        LossOptions o;
        o.normalizer = norm;
        tape.backward(m.loss(tape, b, o).total);
        std::map<std::string, Tensor> g;
        for (auto& p : m.params()) g[p->name] = p->grad;
        return g;
    };
    auto full = grads(batch);
    for (std::size_t s = 0; s < 3; ++s) {
        std::vector<std::size_t> rows;
        for (std::size_t t = 0; t < batch.size; ++t)
            if (batch.scenario[t] == s) rows.push_back(t);
        ASSERT_FALSE(rows.empty());
        auto sub = grads(batch.subset(rows));
        for (const auto& [name, g] : full) {
            const std::string prefix = "branch" + std::to_string(s) + "/";
            const std::string gate = "mutual/gate" + std::to_string(s) + "/";
            if (name.rfind(prefix, 0) == 0 || name.rfind(gate, 0) == 0)
                EXPECT_TRUE(same_bits(g, sub[name])) << name;
        }
    }
}

TEST(Model, AuxiliaryGradientsIgnoreBranchLosses) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    auto batch = encode_batch(schema, random_records(schema, 20, 60));
    auto aux_grads = [&](bool with_target) {
        m.params().zero_grad();
        Tape tape;
        LossOptions o;
        o.include_target = with_target;
        tape.backward(m.loss(tape, batch, o).total);
        std::map<std::string, Tensor> g;
        for (auto& p : m.params())
            if (p->name.rfind("aux/", 0) == 0) g[p->name] = p->grad;
        return g;
    };
    auto a = aux_grads(true), b = aux_grads(false);
    ASSERT_FALSE(a.empty());
    for (const auto& [name, g] : a) {
        EXPECT_TRUE(same_bits(g, b[name])) << name;
        double norm = 0.0;
        for (double x : g.values()) norm += std::abs(x);
        EXPECT_GT(norm, 0.0) << name;
    }
}

TEST(Model, ZeroGateMatchesNoGateVariantBitwise) {
    auto schema = tiny_schema();
    auto full_cfg = small_config(VariantKind::Full, 17);
    full_cfg.gate_override = 0.0;
    SamlModel full(schema, full_cfg);
    SamlModel plain(schema, small_config(VariantKind::NoGate, 17));
    for (auto& p : plain.params()) ASSERT_TRUE(same_bits(p->value, full.params().get(p->name).value)) << p->name;
    auto batch = encode_batch(schema, random_records(schema, 64, 70));
    Tape t1, t2;
    auto a = full.forward(t1, batch);
    auto b = plain.forward(t2, batch);
    EXPECT_TRUE(same_bits(a.probs.value(), b.probs.value()));
    LossOptions o;
    EXPECT_EQ(full.loss(t1, batch, o).report.target, plain.loss(t2, batch, o).report.target);
}

TEST(Model, AuxConnectionIsTheOnlyAuxPathIntoBranches) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    const std::size_t dep = m.features().dependent_width();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t l = 1; l <= 2; ++l) {
            auto& w = m.params().get("branch" + std::to_string(i) + "/layer" + std::to_string(l) + "/w").value;
            const std::size_t from = l == 1 ? dep : 6;
            for (std::size_t r = from; r < w.rows(); ++r)
                for (std::size_t c = 0; c < w.cols(); ++c) w.at(r, c) = 0.0;
        }
    auto batch = encode_batch(schema, random_records(schema, 10, 80));
    Tape t1;
    Tensor before = m.forward(t1, batch).probs.value();
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& p : m.params())
        if (p->name.rfind("aux/", 0) == 0)
            for (auto& x : p->value.storage()) x += nd(rng);
    Tape t2;
    EXPECT_TRUE(same_bits(before, m.forward(t2, batch).probs.value()));
}

TEST(Model, GatesStayInOpenUnitInterval) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    auto batch = encode_batch(schema, random_records(schema, 40, 90));
    auto pred = m.predict_detailed(batch);
    ASSERT_NE(pred.mutual, nullptr);
    for (double g : pred.mutual->gate) {
        EXPECT_GT(g, 0.0);
        EXPECT_LT(g, 1.0);
    }
    for (std::size_t t = 0; t < batch.size; ++t)
        for (std::size_t i = 0; i < 3; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 3; ++j) row += pred.mutual->alpha_at(t, i, j);
            EXPECT_NEAR(row, 1.0, 1e-9);
        }
}

TEST(Model, PredictIsBatchingInvariant) {
    auto schema = tiny_schema();
    for (auto k : {VariantKind::Full, VariantKind::IndividualBaseline}) {
        auto m = make_variant(schema, small_config(k));
        auto batch = encode_batch(schema, random_records(schema, 12, 100));
        auto all = m->predict(batch);
        for (std::size_t t = 0; t < batch.size; ++t) EXPECT_EQ(all[t], m->predict(batch.subset({t}))[0]);
        EXPECT_EQ(all, m->predict(batch));
    }
}

TEST(Model, AllBranchLogitsFinite) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    Tape tape;
    auto out = m.forward(tape, encode_batch(schema, random_records(schema, 30, 110)));
    EXPECT_TRUE(out.probs.value().all_finite());
    EXPECT_EQ(out.probs.value().cols(), 3u);
}

TEST(Variants, StructuralContracts) {
    auto schema = tiny_schema();
    auto cfg = [](VariantKind k) {
        auto c = small_config(k);
        c.hidden = {16, 8};
        return c;
    };
    SamlModel full(schema, cfg(VariantKind::Full));
    SamlModel no_aux(schema, cfg(VariantKind::NoAux));
    SamlModel unified(schema, cfg(VariantKind::UnifiedBaseline));
    SamlModel no_gate_mut(schema, cfg(VariantKind::NoGateMut));
    EXPECT_LT(no_aux.parameter_count(), full.parameter_count());
    EXPECT_EQ(unified.output_heads(), 1u);
    EXPECT_EQ(no_gate_mut.output_heads(), 1u);
    EXPECT_EQ(full.output_heads(), 3u);
    EXPECT_FALSE(unified.params().contains("emb/specific/item_id"));
    EXPECT_TRUE(no_gate_mut.params().contains("emb/specific/item_id"));
    EXPECT_THROW(parse_variant("wide_and_deep"), ConfigError);
    for (const auto& [k, name] : variant_names()) EXPECT_EQ(parse_variant(name), k);
    IndividualModel ind(schema, cfg(VariantKind::IndividualBaseline));
    EXPECT_EQ(ind.size(), 3u);
    EXPECT_EQ(ind.parameter_count(), 3 * unified.parameter_count());
}

TEST(Model, BranchesStartFromIdenticalWeights) {
    auto schema = tiny_schema();
    SamlModel m(schema, small_config(VariantKind::Full));
    std::size_t compared = 0;
    for (auto& p : m.params()) {
        if (p->name.rfind("branch0/", 0) != 0) continue;
        for (std::size_t i = 1; i < 3; ++i) {
            const std::string twin = "branch" + std::to_string(i) + p->name.substr(7);
            EXPECT_TRUE(same_bits(p->value, m.params().get(twin).value)) << twin;
            ++compared;
        }
    }
    EXPECT_EQ(compared, 12u);
}
