#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "saml/features/representation.hpp"
#include "saml/numerics/gradcheck.hpp"
#include "../test_support.hpp"

using namespace saml;
using saml::testing::random_record;
using saml::testing::random_records;
using saml::testing::tiny_schema;

namespace {

Tensor identity(std::size_t d) {
    Tensor t(Shape{d, d});
    for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1.0;
    return t;
}

void set_identity(const AttentionParams& p) {
    for (auto* w : {p.wq, p.wk, p.wv, p.wo}) w->value = identity(p.dim());
}

struct Fixture {
    FeatureSchema schema;
    ParameterStore store;
    std::mt19937_64 rng{7};
    ScenarioAwareFeatures features;
    Encoder encoder;

    explicit Fixture(FeatureSchema s, bool with_specific = true, std::size_t heads = 2)
        : schema(s), features(s, store, with_specific, heads, rng),
          encoder(s, NumericStats::fit(s, random_records(s, 50, 99))) {}

    EncodedBatch batch(const std::vector<ExampleRecord>& recs) const {
        auto enc = encoder.encode_all(recs);
        return EncodedBatch::from(std::span<const EncodedExample>(enc));
    }
};

} // namespace

TEST(EncodeRecord, NumericalAtTrainMeanIsZero) {
    auto s = tiny_schema();
    auto train = random_records(s, 40, 1);
    auto stats = NumericStats::fit(s, train);
    Encoder enc(s, stats);
    auto r = train[0];
    r.numerical["age"] = stats.mean[0];
    EXPECT_EQ(enc.encode(r).numeric[0], 0.0);
}

TEST(EncodeRecord, SequenceMaskAndRoundTrip) {
    auto s = tiny_schema(3, 5);
    std::mt19937_64 rng(2);
    auto r = random_record(s, rng, 2, 3);
    r.label = 1;
    Encoder enc(s, NumericStats::fit(s, std::vector<ExampleRecord>{r}));
    auto e = enc.encode(r);
    EXPECT_EQ(e.mask, (std::vector<char>{1, 1, 1, 0, 0}));
    EXPECT_EQ(e.seq_len, 3u);
    EXPECT_EQ(e.seq_ids[0][3], 0u);
    EXPECT_EQ(e.label, 1);
    EXPECT_EQ(e.scenario, 2u);
}

TEST(EncodeRecord, OutOfVocabularyMapsToReservedIndex) {
    auto s = tiny_schema();
    std::mt19937_64 rng(3);
    auto r = random_record(s, rng, 0, 2);
    r.categorical["item_id"] = 1000;
    r.categorical["user_id"] = -4;
    r.behavior[1]["hist_item_cat"] = 6;  // == vocab size
    Encoder enc(s, NumericStats::fit(s, std::vector<ExampleRecord>{r}));
    auto e = enc.encode(r);
    EXPECT_EQ(e.cat_ids[0], 0u);  // user_id
    EXPECT_EQ(e.cat_ids[1], 0u);  // item_id
    EXPECT_EQ(e.seq_ids[1][1], 0u);
}

TEST(EncodeRecord, ScenarioOutOfRangeIsHardError) {
    auto s = tiny_schema(3);
    std::mt19937_64 rng(4);
    auto r = random_record(s, rng, 0);
    Encoder enc(s, NumericStats::fit(s, std::vector<ExampleRecord>{r}));
    r.scenario = 3;
    EXPECT_THROW(enc.encode(r), DataError);
    EXPECT_THROW(validate_record(s, r), DataError);
}

TEST(Schema, ValidationRejectsBadLayouts) {
    auto s = tiny_schema();
    s.num_scenarios = 1;
    EXPECT_THROW(s.validate(), ConfigError);
    s = tiny_schema();
    s.fields.pop_back();  // no scenario field
    EXPECT_THROW(s.validate(), ConfigError);
    s = tiny_schema();
    s.fields[5].shares = "missing";
    EXPECT_THROW(s.validate(), ConfigError);
    s = tiny_schema();
    EXPECT_EQ(schema_from_json(to_json_value(s)), s);
    auto j = to_json_value(s);
    j["bogus"] = 1;
    EXPECT_THROW(schema_from_json(j), ConfigError);
}

TEST(EmbedDual, SameItemDifferentScenarios) {
    Fixture fx(tiny_schema());
    std::mt19937_64 rng(5);
    auto a = random_record(fx.schema, rng, 0, 2);
    auto b = a;
    b.scenario = 2;
    Tape tape;
    auto out = embed_dual(tape, fx.schema, fx.features.tables(), fx.batch({a, b}));
    const auto& item_global = out.global_fields[1].value();
    const auto& item_specific = out.specific_fields[1].value();
    for (std::size_t c = 0; c < fx.schema.global_dim; ++c) EXPECT_EQ(item_global.at(0, c), item_global.at(1, c));
    bool differs = false;
    for (std::size_t c = 0; c < fx.schema.specific_dim; ++c)
        differs = differs || item_specific.at(0, c) != item_specific.at(1, c);
    EXPECT_TRUE(differs);
}

TEST(EmbedDual, OtherScenarioSlicesGetExactlyZeroGradient) {
    Fixture fx(tiny_schema(4));
    auto recs = random_records(fx.schema, 12, 6, /*scenario=*/1);
    Tape tape;
    auto fv = fx.features.build(tape, fx.batch(recs));
    std::mt19937_64 rng(8);
    Tensor w(fv.dependent->shape());
    for (auto& v : w.storage()) v = std::normal_distribution<double>()(rng);
    tape.backward(sum(mul(*fv.dependent, tape.constant(w))));
    for (const char* name : {"emb/specific/item_id", "emb/specific/user_id", "emb/specific/item_cat"}) {
        const auto& p = fx.store.get(name);
        const std::size_t vocab = p.value.rows() / 4;
        bool slice1_nonzero = false;
        for (std::size_t r = 0; r < p.value.rows(); ++r)
            for (std::size_t c = 0; c < p.value.cols(); ++c) {
                if (r / vocab == 1) slice1_nonzero = slice1_nonzero || p.grad.at(r, c) != 0.0;
                else EXPECT_EQ(p.grad.at(r, c), 0.0) << name << " row " << r;
            }
        EXPECT_TRUE(slice1_nonzero) << name;
    }
}

TEST(EmbedDual, LookupGradientMatchesFiniteDifferences) {
    Fixture fx(tiny_schema());
    // Full-length sequences: no padding reads of the frozen row 0.
    std::mt19937_64 rng(9);
    std::vector<ExampleRecord> recs;
    for (int i = 0; i < 6; ++i) recs.push_back(random_record(fx.schema, rng, -1, fx.schema.max_seq_len));
    auto batch = fx.batch(recs);
    auto& g = fx.store.get("emb/global/item_id");
    auto& s = fx.store.get("emb/specific/item_id");
    auto loss = [&](Tape& t) {
        auto out = embed_dual(t, fx.schema, fx.features.tables(), batch);
        return add(sum(mul(out.global_fields[1], out.global_fields[1])), sum(*out.specific_seq));
    };
    GradientChecker gc;
    auto r = gc.check_parameters(loss, {&g, &s}, 0, 1);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(EmbedDual, PaddingRowIsFrozen) {
    Fixture fx(tiny_schema());
    std::mt19937_64 rng(10);
    auto batch = fx.batch({random_record(fx.schema, rng, 0, 1)});
    Tape tape;
    auto out = embed_dual(tape, fx.schema, fx.features.tables(), batch);
    tape.backward(add(sum(*out.global_seq), sum(*out.specific_seq)));
    const auto& g = fx.store.get("emb/global/item_id");
    for (std::size_t c = 0; c < g.value.cols(); ++c) {
        EXPECT_EQ(g.value.at(0, c), 0.0);
        EXPECT_EQ(g.grad.at(0, c), 0.0);
    }
}

TEST(MultiHeadAttention, SingleValidPositionReturnsItsValueRow) {
    ParameterStore store;
    std::mt19937_64 rng(1);
    auto p = AttentionParams::create(store, "a", 3, 1, rng);
    set_identity(p);
    Tape tape;
    auto x = tape.constant(Tensor::matrix({{1, 2, 3}, {7, 7, 7}, {5, 5, 5}}));
    auto out = multi_head_attention(tape, p, x, x, x, {1, 0, 0}, 1, 3);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.out.value().at(0, c), c + 1.0);
}

TEST(MultiHeadAttention, HandComputedTwoPositions) {
    ParameterStore store;
    std::mt19937_64 rng(1);
    auto p = AttentionParams::create(store, "a", 2, 1, rng);
    set_identity(p);
    Tape tape;
    auto x = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    auto out = multi_head_attention(tape, p, x, x, x, {1, 1}, 1, 2).out.value();
    // scores = X X^T / sqrt(2); each row puts weight 1/(1+e^{-1/sqrt2}) on itself.
    const double w = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
    EXPECT_NEAR(out.at(0, 0), w, 1e-15);
    EXPECT_NEAR(out.at(0, 1), 1.0 - w, 1e-15);
    EXPECT_NEAR(out.at(1, 0), 1.0 - w, 1e-15);
    EXPECT_NEAR(out.at(1, 1), w, 1e-15);
}

TEST(MultiHeadAttention, WeightsSumToOneOverValidKeys) {
    ParameterStore store;
    std::mt19937_64 rng(2);
    auto p = AttentionParams::create(store, "a", 4, 2, rng);
    Tensor x = init::normal({2 * 4, 4}, 1.0, rng);
    std::vector<char> mask{1, 1, 1, 0, 1, 0, 0, 0};
    Tape tape;
    auto xv = tape.constant(x);
    auto out = multi_head_attention(tape, p, xv, xv, xv, mask, 2, 4);
    const auto& w = *out.weights;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t l = 0; l < 4; ++l) {
                double s = 0.0;
                for (std::size_t m = 0; m < 4; ++m) {
                    const double v = w[((b * 2 + h) * 4 + l) * 4 + m];
                    if (!mask[b * 4 + m]) EXPECT_EQ(v, 0.0);
                    s += v;
                }
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
}

TEST(MultiHeadAttention, FullyMaskedSampleOutputsZeros) {
    ParameterStore store;
    std::mt19937_64 rng(3);
    auto p = AttentionParams::create(store, "a", 4, 2, rng);
    Tape tape;
    auto xv = tape.constant(init::normal({3, 4}, 1.0, rng));
    auto out = multi_head_attention(tape, p, xv, xv, xv, {0, 0, 0}, 1, 3).out.value();
    for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(MultiHeadAttention, IndivisibleHeadsIsConfigError) {
    ParameterStore store;
    std::mt19937_64 rng(4);
    EXPECT_THROW(AttentionParams::create(store, "a", 6, 4, rng), ConfigError);
}

TEST(MultiHeadAttention, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    GradientChecker gc;
    std::vector<char> mask{1, 1, 0, 1, 1, 1};
    for (int trial = 0; trial < 20; ++trial) {
        ParameterStore store;
        auto p = AttentionParams::create(store, "a", 4, 2, rng);
        Tensor x = init::normal({6, 4}, 1.0, rng);
        Tensor y = init::normal({6, 4}, 1.0, rng);
        Tensor w = init::normal({6, 4}, 1.0, rng);
        auto f = [&](Tape& t, const std::vector<Var>& in) {
            auto out = multi_head_attention(t, p, in[0], in[0], in[1], mask, 2, 3).out;
            return sum(mul(out, t.constant(w)));
        };
        auto r = gc.check(f, {x, y});
        EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
        auto rp = gc.check_parameters(
            [&](Tape& t) { return f(t, {t.constant(x), t.constant(y)}); }, {p.wq, p.wk, p.wv, p.wo}, 0, trial);
        EXPECT_LT(rp.max_rel_error, 1e-4) << rp.worst;
    }
}

TEST(FeatureVectors, WidthsFollowFormula) {
    Fixture fx(tiny_schema(3, 5, 4, 2));
    Tape tape;
    auto fv = fx.features.build(tape, fx.batch(random_records(fx.schema, 7, 10)));
    // 3 categorical fields, 2 numericals, pooled attention of width K_g.
    EXPECT_EQ(fx.features.independent_width(), 3u * 4 + 2 + 4);
    EXPECT_EQ(fx.features.dependent_width(), 3u * 2 + 2 + 4);
    EXPECT_EQ(fv.independent.value().shape(), (Shape{7, 18}));
    EXPECT_EQ(fv.dependent->value().shape(), (Shape{7, 12}));
}

TEST(FeatureVectors, ZeroingSpecificTablesLeavesIndependentIdentical) {
    Fixture fx(tiny_schema());
    auto batch = fx.batch(random_records(fx.schema, 9, 11));
    Tape t1;
    auto before = fx.features.build(t1, batch);
    for (const char* n : {"emb/specific/user_id", "emb/specific/item_id", "emb/specific/item_cat"})
        fx.store.get(n).value.fill(0.0);
    Tape t2;
    auto after = fx.features.build(t2, batch);
    EXPECT_EQ(before.independent.value(), after.independent.value());
    EXPECT_NE(before.dependent->value(), after.dependent->value());
}

TEST(FeatureVectors, IdentityAttentionCollapsesToSingleItemEmbedding) {
    FeatureSchema s = tiny_schema(3, 5, 4, 2);
    s.fields.erase(s.fields.begin() + 6);  // keep one behavior sub-field
    Fixture fx(s, true, 1);
    set_identity(fx.features.global_attention());
    std::mt19937_64 rng(12);
    auto r = random_record(s, rng, 0, 1);
    r.behavior = {{{"hist_item_id", 7}}};
    Tape tape;
    auto fv = fx.features.build(tape, fx.batch({r}));
    const auto& ind = fv.independent.value();
    const auto& table = fx.store.get("emb/global/item_id").value;
    const std::size_t off = 3 * 4 + 2;  // three categorical fields then two numericals
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(ind.at(0, off + c), table.at(7, c));
}

TEST(FeatureVectors, PaddingNeverChangesPooledAttention) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        auto s5 = tiny_schema(3, 5);
        auto s9 = tiny_schema(3, 9);
        ParameterStore st5, st9;
        std::mt19937_64 r5(100 + trial), r9(100 + trial);
        ScenarioAwareFeatures f5(s5, st5, true, 2, r5), f9(s9, st9, true, 2, r9);
        auto rec = random_record(s5, rng, -1, 1 + trial % 5);
        NumericStats stats{{0.0, 0.0}, {1.0, 1.0}};
        auto e5 = Encoder(s5, stats).encode(rec);
        auto e9 = Encoder(s9, stats).encode(rec);
        Tape t5, t9;
        auto v5 = f5.build(t5, EncodedBatch::from(std::span<const EncodedExample>(&e5, 1)));
        auto v9 = f9.build(t9, EncodedBatch::from(std::span<const EncodedExample>(&e9, 1)));
        EXPECT_EQ(v5.independent.value(), v9.independent.value());
        EXPECT_EQ(v5.dependent->value(), v9.dependent->value());
    }
}

TEST(FeatureVectors, SharedValueEmbeddingFeedsBothAttentions) {
    Fixture fx(tiny_schema());
    std::mt19937_64 rng(14);
    auto r = random_record(fx.schema, rng, 1, 4);
    auto batch = fx.batch({r});
    Tape t1;
    auto before = fx.features.build(t1, batch);
    // Perturb the global rows of the behavior items only (the target item keeps its row).
    auto& g = fx.store.get("emb/global/item_cat");
    for (const auto& item : r.behavior) {
        auto id = static_cast<std::size_t>(item.at("hist_item_cat"));
        if (id == static_cast<std::size_t>(r.categorical.at("item_cat"))) continue;
        for (std::size_t c = 0; c < g.value.cols(); ++c) g.value.at(id, c) += 0.5;
    }
    Tape t2;
    auto after = fx.features.build(t2, batch);
    const std::size_t kg = fx.schema.global_dim;
    const auto& i0 = before.independent.value();
    const auto& i1 = after.independent.value();
    const auto& d0 = before.dependent->value();
    const auto& d1 = after.dependent->value();
    bool ind_changed = false, dep_changed = false;
    for (std::size_t c = 0; c < kg; ++c) {
        ind_changed = ind_changed || i0.at(0, i0.cols() - kg + c) != i1.at(0, i1.cols() - kg + c);
        dep_changed = dep_changed || d0.at(0, d0.cols() - kg + c) != d1.at(0, d1.cols() - kg + c);
    }
    EXPECT_TRUE(ind_changed);
    EXPECT_TRUE(dep_changed);
}

TEST(FeatureVectors, SubspaceIsolationProperty) {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        Fixture fx(tiny_schema(3 + trial % 3));
        auto batch = fx.batch(random_records(fx.schema, 5, 200 + trial));
        Tape t1;
        auto before = fx.features.build(t1, batch).independent.value();
        for (auto& p : fx.store)
            if (p->name.rfind("emb/specific/", 0) == 0 || p->name.rfind("attn/scenario", 0) == 0)
                for (auto& v : p->value.storage()) v += std::normal_distribution<double>()(rng);
        Tape t2;
        EXPECT_EQ(before, fx.features.build(t2, batch).independent.value());
    }
}

TEST(FeatureVectors, GlobalOnlyModeHasNoDependentVector) {
    Fixture fx(tiny_schema(), false);
    Tape tape;
    auto fv = fx.features.build(tape, fx.batch(random_records(fx.schema, 3, 16)));
    EXPECT_FALSE(fv.dependent.has_value());
    EXPECT_FALSE(fx.store.contains("emb/specific/item_id"));
}
