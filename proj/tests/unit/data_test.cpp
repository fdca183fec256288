#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "saml/data/synthetic.hpp"

using namespace saml;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 5) {
    SyntheticSpec s;
    s.samples_per_scenario = {120, 60, 20};
    s.similarity = {{1.0, 0.5, 0.8}, {0.5, 1.0, 0.2}, {0.8, 0.2, 1.0}};
    s.num_items = 40;
    s.max_seq_len = 5;
    s.seed = seed;
    return s;
}

std::string serialize(const Dataset& d) {
    std::ostringstream out;
    write_dataset(d, out);
    return out.str();
}

std::vector<EncodedExample> encode_all(const Dataset& d) {
    Encoder enc(d.schema, NumericStats::fit(d.schema, d.records));
    std::vector<EncodedExample> out;
    for (const auto& r : d.records) out.push_back(enc.encode(r));
    return out;
}

} // namespace

TEST(DatasetIo, EmptyStreamIsEmptyDataset) {
    std::istringstream in("");
    auto d = read_dataset(in);
    EXPECT_TRUE(d.records.empty());
}

TEST(DatasetIo, WriteThenLoadIsIdentity) {
    auto d = generate_synthetic(small_spec());
    std::istringstream in(serialize(d));
    auto back = read_dataset(in);
    EXPECT_EQ(back.schema, d.schema);
    EXPECT_EQ(back.split_ts, d.split_ts);
    ASSERT_EQ(back.records.size(), d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i) EXPECT_EQ(back.records[i], d.records[i]) << i;
    EXPECT_EQ(serialize(back), serialize(d));
}

TEST(DatasetIo, CorruptLineIsReportedByNumber) {
    auto d = generate_synthetic(small_spec());
    std::istringstream src(serialize(d));
    std::string text, line;
    for (int i = 0; std::getline(src, line); ++i) text += (i == 2 ? std::string("{\"user\": oops") : line) + "\n";
    std::istringstream in(text);
    try {
        read_dataset(in, "data.jsonl");
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("data.jsonl:3:"), std::string::npos) << e.what();
    }
}

TEST(DatasetIo, SchemaMismatchNamesTheField) {
    auto d = generate_synthetic(small_spec());
    auto j = nlohmann::json::parse(serialize(d).substr(0, serialize(d).find('\n')));
    std::string text = j.dump() + "\n";
    text += R"({"user":{"user_id":1,"user_age":30.0,"colour":2},"item":{"item_id":1,"item_category":1,"item_price":9.5},)"
            R"("behavior":[],"context":{"scenario":0,"ts":5},"label":1})"
            "\n";
    std::istringstream in(text);
    try {
        read_dataset(in);
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("'colour'"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(DatasetIo, MissingFieldIsNamed) {
    auto d = generate_synthetic(small_spec());
    const std::string s = serialize(d);
    std::string text = s.substr(0, s.find('\n') + 1);
    text += R"({"user":{"user_id":1},"item":{"item_id":1,"item_category":1,"item_price":9.5},)"
            R"("behavior":[],"context":{"scenario":0,"ts":5},"label":1})"
            "\n";
    std::istringstream in(text);
    EXPECT_THROW(
        {
            try {
                read_dataset(in);
            } catch (const DataError& e) {
                EXPECT_NE(std::string(e.what()).find("'user_age'"), std::string::npos) << e.what();
                throw;
            }
        },
        DataError);
}

TEST(Batching, SizesAndPartialFinalBatch) {
    auto d = generate_synthetic(small_spec());
    auto ex = encode_all(d);
    ex.resize(10);
    BatchIterator it(ex, 3, 42);
    auto b = it.batches(0);
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b[0].size(), 3u);
    EXPECT_EQ(b[1].size(), 3u);
    EXPECT_EQ(b[2].size(), 3u);
    EXPECT_EQ(b[3].size(), 1u);
    EXPECT_THROW(BatchIterator(ex, 0, 1), ConfigError);
}

TEST(Batching, DeterministicAndComplete) {
    auto d = generate_synthetic(small_spec());
    auto ex = encode_all(d);
    BatchIterator a(ex, 7, 9), b(ex, 7, 9);
    for (std::size_t epoch = 0; epoch < 3; ++epoch) {
        EXPECT_EQ(a.batches(epoch), b.batches(epoch));
        std::multiset<std::size_t> seen;
        for (const auto& rows : a.batches(epoch)) seen.insert(rows.begin(), rows.end());
        ASSERT_EQ(seen.size(), ex.size());
        std::size_t i = 0;
        for (auto v : seen) EXPECT_EQ(v, i++);
    }
    EXPECT_NE(a.order(0), a.order(1));
    std::size_t rows = 0;
    a.for_each(0, [&](const EncodedBatch& batch) { rows += batch.size; });
    EXPECT_EQ(rows, ex.size());
}

TEST(Synthetic, SameSeedIsByteIdentical) {
    EXPECT_EQ(serialize(generate_synthetic(small_spec(3))), serialize(generate_synthetic(small_spec(3))));
    EXPECT_NE(serialize(generate_synthetic(small_spec(3))), serialize(generate_synthetic(small_spec(4))));
}

TEST(Synthetic, TimeSplitSeparatesPeriods) {
    auto d = generate_synthetic(small_spec());
    auto train = d.train(), test = d.test();
    ASSERT_FALSE(train.empty());
    ASSERT_FALSE(test.empty());
    std::int64_t last_train = 0, first_test = std::numeric_limits<std::int64_t>::max();
    for (const auto& r : train) last_train = std::max(last_train, r.ts);
    for (const auto& r : test) first_test = std::min(first_test, r.ts);
    EXPECT_LT(last_train, first_test);
    EXPECT_EQ(train.size() + test.size(), d.records.size());
}

TEST(Synthetic, CountsAndRecordsAreValid) {
    auto spec = small_spec();
    auto d = generate_synthetic(spec);
    std::vector<std::size_t> counts(3, 0);
    for (const auto& r : d.records) {
        EXPECT_NO_THROW(validate_record(d.schema, r));
        ++counts[static_cast<std::size_t>(r.scenario)];
    }
    EXPECT_EQ(counts, spec.samples_per_scenario);
}

TEST(Synthetic, BehaviorIsEarlierPositivesNewestFirst) {
    auto d = generate_synthetic(small_spec());
    std::map<std::int64_t, std::vector<std::int64_t>> positives;
    for (const auto& r : d.records) {
        const auto& hist = positives[r.categorical.at("user_id")];
        ASSERT_EQ(r.behavior.size(), std::min<std::size_t>(hist.size(), 5));
        for (std::size_t k = 0; k < r.behavior.size(); ++k)
            EXPECT_EQ(r.behavior[k].at("hist_item_id"), hist[hist.size() - 1 - k]);
        if (r.label == 1) positives[r.categorical.at("user_id")].push_back(r.categorical.at("item_id"));
    }
}

TEST(Synthetic, PreferenceCosinesMatchRequestedMatrix) {
    auto spec = small_spec();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        auto p = scenario_preferences(spec, rng);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double dot = 0.0, ni = 0.0, nj = 0.0;
                for (std::size_t d = 0; d < spec.latent_dim; ++d) {
                    dot += p[i][d] * p[j][d];
                    ni += p[i][d] * p[i][d];
                    nj += p[j][d] * p[j][d];
                }
                EXPECT_NEAR(dot / std::sqrt(ni * nj), spec.similarity[i][j], 0.05);
            }
    }
}

TEST(Synthetic, NonPsdSimilarityIsRejected) {
    auto spec = small_spec();
    spec.similarity = {{1.0, 0.9, -0.9}, {0.9, 1.0, 0.9}, {-0.9, 0.9, 1.0}};
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec.similarity = {{1.0, 0.5, 0.8}, {0.4, 1.0, 0.2}, {0.8, 0.2, 1.0}};
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec.samples_per_scenario = {10, 0, 5};
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

TEST(Synthetic, PositiveRateMatchesExpectation) {
    SyntheticSpec spec;
    spec.samples_per_scenario = {30000, 15000, 5000};
    spec.similarity = {{1.0, 0.5, 0.8}, {0.5, 1.0, 0.2}, {0.8, 0.2, 1.0}};
    spec.seed = 17;
    const double expected = expected_positive_rate(spec);
    auto d = generate_synthetic(spec);
    double pos = 0.0;
    for (const auto& r : d.records) pos += r.label;
    EXPECT_NEAR(pos / static_cast<double>(d.records.size()), expected, 0.02);
}

TEST(Synthetic, ZeroScenarioWeightsRemoveScenarioDependence) {
    auto spec = small_spec();
    spec.scenario_weights = {0.0, 0.0, 0.0};
    std::mt19937_64 rng(spec.seed);
    auto w = make_world(spec, rng);
    for (std::size_t u = 0; u < 5; ++u)
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(w.logit(spec, 0, u, i), w.logit(spec, 1, u, i));
            EXPECT_EQ(w.logit(spec, 0, u, i), w.logit(spec, 2, u, i));
        }
}

TEST(Synthetic, SpecJsonRoundTripAndUnknownKeys) {
    auto spec = small_spec();
    auto back = synthetic_spec_from_json(to_json_value(spec));
    EXPECT_EQ(to_json_value(back), to_json_value(spec));
    auto j = to_json_value(spec);
    j["colour"] = 1;
    EXPECT_THROW(synthetic_spec_from_json(j), ConfigError);
}

TEST(Synthetic, SharedUserPoolSpansScenarios) {
    auto spec = small_spec();
    std::mt19937_64 r1(spec.seed), r2(spec.seed);
    auto partitioned = make_world(spec, r1);
    spec.shared_users = true;
    auto shared = make_world(spec, r2);
    EXPECT_EQ(shared.user_latent, partitioned.user_latent);
    for (const auto& pool : shared.scenario_users) EXPECT_EQ(pool.size(), shared.user_latent.size());
    auto d = generate_synthetic(spec);
    std::map<std::int64_t, std::set<std::int64_t>> seen_in;
    for (const auto& r : d.records) seen_in[r.categorical.at("user_id")].insert(r.scenario);
    std::size_t multi = 0;
    for (const auto& [u, s] : seen_in) multi += s.size() > 1;
    EXPECT_GT(multi, 0u);
    EXPECT_EQ(synthetic_spec_from_json(to_json_value(spec)).shared_users, true);
}
