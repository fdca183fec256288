#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "saml/data/dataset.hpp"

namespace saml {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Parameters of the synthetic multi-scenario generator.
///
/// Every user belongs to one scenario; items are shared. For a sample of scenario s
///   logit = base_logit + shared_weight * (u.v)/sqrt(k) + scenario_weights[s] * sum_d p_s[d] u_d v_d
/// where u, v ~ N(0, I_k) are the user and item latents and p_s is the unit preference
/// vector of scenario s. The p_s realize the requested cosine-similarity matrix.
/// Labels are Bernoulli(sigmoid(logit)), then flipped with probability label_noise.
struct SyntheticSpec {
    std::vector<std::size_t> samples_per_scenario{1000, 300, 100};
    std::vector<std::vector<double>> similarity;  // empty means identity
    std::size_t latent_dim = 8;
    std::size_t samples_per_user = 10;
    std::size_t num_items = 200;
    std::size_t num_categories = 10;
    double base_logit = -0.5;
    double shared_weight = 2.0;
    std::vector<double> scenario_weights;  // empty means 2.0 for every scenario
    double label_noise = 0.05;
    bool shared_users = false;  // one user pool visited by every scenario
    std::size_t days = 8;
    std::size_t test_days = 1;
    std::size_t global_dim = 12;
    std::size_t specific_dim = 4;
    std::size_t max_seq_len = 15;
    std::uint64_t seed = 1;

    std::size_t num_scenarios() const { return samples_per_scenario.size(); }

    std::vector<std::vector<double>> similarity_matrix() const {
        if (!similarity.empty()) return similarity;
        const std::size_t n = num_scenarios();
        std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
        return m;
    }

    double scenario_weight(std::size_t s) const { return scenario_weights.empty() ? 2.0 : scenario_weights[s]; }

    std::size_t users_in(std::size_t s) const {
        return std::max<std::size_t>(1, (samples_per_scenario[s] + samples_per_user - 1) / samples_per_user);
    }

    void validate() const {
        const std::size_t n = num_scenarios();
        if (n < 2) throw ConfigError("synthetic: at least two scenarios are required");
        for (auto c : samples_per_scenario)
            if (c < 1) throw ConfigError("synthetic: every scenario needs at least one sample");
        if (latent_dim < n) throw ConfigError("synthetic: latent_dim must be >= the number of scenarios");
        if (samples_per_user < 1 || num_items < 1 || num_categories < 1)
            throw ConfigError("synthetic: pool sizes must be positive");
        if (!scenario_weights.empty() && scenario_weights.size() != n)
            throw ConfigError("synthetic: scenario_weights needs one entry per scenario");
        if (label_noise < 0.0 || label_noise > 0.5) throw ConfigError("synthetic: label_noise must lie in [0, 0.5]");
        if (days < 2 || test_days < 1 || test_days >= days) throw ConfigError("synthetic: need 1 <= test_days < days");
        const auto m = similarity_matrix();
        if (m.size() != n) throw ConfigError("synthetic: similarity matrix must be " + std::to_string(n) + "x" + std::to_string(n));
        for (std::size_t i = 0; i < n; ++i) {
            if (m[i].size() != n) throw ConfigError("synthetic: similarity matrix must be square");
            if (std::abs(m[i][i] - 1.0) > 1e-12) throw ConfigError("synthetic: similarity diagonal must be 1");
            for (std::size_t j = 0; j < n; ++j) {
                if (std::abs(m[i][j] - m[j][i]) > 1e-12) throw ConfigError("synthetic: similarity matrix must be symmetric");
                if (std::abs(m[i][j]) > 1.0) throw ConfigError("synthetic: similarities must lie in [-1, 1]");
            }
        }
    }
};

inline nlohmann::json to_json_value(const SyntheticSpec& s) {
    return {{"samples_per_scenario", s.samples_per_scenario},
            {"similarity", s.similarity_matrix()},
            {"latent_dim", s.latent_dim},
            {"samples_per_user", s.samples_per_user},
            {"num_items", s.num_items},
            {"num_categories", s.num_categories},
            {"base_logit", s.base_logit},
            {"shared_weight", s.shared_weight},
            {"scenario_weights", s.scenario_weights},
            {"label_noise", s.label_noise},
            {"shared_users", s.shared_users},
            {"days", s.days},
            {"test_days", s.test_days},
            {"global_dim", s.global_dim},
            {"specific_dim", s.specific_dim},
            {"max_seq_len", s.max_seq_len},
            {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("synthetic spec must be an object");
    SyntheticSpec s;
    const auto known = to_json_value(s);
    for (const auto& [k, _] : j.items())
        if (!known.contains(k)) throw ConfigError("synthetic spec: unknown key '" + k + "'");
    try {
        s.samples_per_scenario = j.value("samples_per_scenario", s.samples_per_scenario);
        s.similarity = j.value("similarity", s.similarity);
        s.latent_dim = j.value("latent_dim", s.latent_dim);
        s.samples_per_user = j.value("samples_per_user", s.samples_per_user);
        s.num_items = j.value("num_items", s.num_items);
        s.num_categories = j.value("num_categories", s.num_categories);
        s.base_logit = j.value("base_logit", s.base_logit);
        s.shared_weight = j.value("shared_weight", s.shared_weight);
        s.scenario_weights = j.value("scenario_weights", s.scenario_weights);
        s.label_noise = j.value("label_noise", s.label_noise);
        s.shared_users = j.value("shared_users", s.shared_users);
        s.days = j.value("days", s.days);
        s.test_days = j.value("test_days", s.test_days);
        s.global_dim = j.value("global_dim", s.global_dim);
        s.specific_dim = j.value("specific_dim", s.specific_dim);
        s.max_seq_len = j.value("max_seq_len", s.max_seq_len);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

/// Latent structure drawn from a spec: the pools every sample is built from.
struct SyntheticWorld {
    std::size_t k = 0;
    std::vector<std::vector<double>> preference;   // [scenario][k], unit norm
    std::vector<std::vector<double>> user_latent;  // [user][k], user ids are index + 1
    std::vector<std::size_t> user_scenario;
    std::vector<std::vector<std::size_t>> scenario_users;
    std::vector<std::vector<double>> item_latent;  // [item][k], item ids are index + 1
    std::vector<std::size_t> item_category;        // 1-based
    std::vector<double> user_age;
    std::vector<double> item_price;

    double logit(const SyntheticSpec& spec, std::size_t s, std::size_t user, std::size_t item) const {
        const auto& u = user_latent[user];
        const auto& v = item_latent[item];
        double shared = 0.0, scen = 0.0;
        for (std::size_t d = 0; d < k; ++d) {
            shared += u[d] * v[d];
            scen += preference[s][d] * u[d] * v[d];
        }
        return spec.base_logit + spec.shared_weight * shared / std::sqrt(static_cast<double>(k)) +
               spec.scenario_weight(s) * scen;
    }
};

/// Unit vectors in R^k whose pairwise cosines equal the similarity matrix.
///
/// The matrix is factored as V diag(lambda) V^T (a PSD check: any eigenvalue below
/// -1e-9 is rejected), the rows of V diag(sqrt lambda) are lifted into R^k by a random
/// orthonormal basis, and each row is renormalized.
inline std::vector<std::vector<double>> scenario_preferences(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const auto m = spec.similarity_matrix();
    const std::size_t n = m.size(), k = spec.latent_dim;
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) c(i, j) = m[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    if (eig.eigenvalues().minCoeff() < -1e-9)
        throw ConfigError("synthetic: similarity matrix is not positive semidefinite (smallest eigenvalue " +
                          std::to_string(eig.eigenvalues().minCoeff()) + ")");
    Eigen::MatrixXd f = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd g(k, n);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) = nd(rng);
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(k, n);
    Eigen::MatrixXd p = f * q.transpose();  // [n x k]
    std::vector<std::vector<double>> out(n, std::vector<double>(k));
    for (std::size_t s = 0; s < n; ++s) {
        const double norm = p.row(s).norm();
        for (std::size_t d = 0; d < k; ++d) out[s][d] = p(s, d) / norm;
    }
    return out;
}

inline SyntheticWorld make_world(const SyntheticSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    SyntheticWorld w;
    w.k = spec.latent_dim;
    w.preference = scenario_preferences(spec, rng);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto draw = [&] {
        std::vector<double> v(w.k);
        for (auto& x : v) x = nd(rng);
        return v;
    };
    // Items cluster around category centroids; the mix keeps unit variance per coordinate.
    std::vector<std::vector<double>> centroid;
    for (std::size_t c = 0; c < spec.num_categories; ++c) centroid.push_back(draw());
    const auto age_dir = draw();
    const auto price_dir = draw();
    auto proj = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0, n = 0.0;
        for (std::size_t d = 0; d < w.k; ++d) {
            s += a[d] * b[d];
            n += b[d] * b[d];
        }
        return s / std::sqrt(n);
    };
    for (std::size_t i = 0; i < spec.num_items; ++i) {
        const std::size_t c = std::uniform_int_distribution<std::size_t>(0, spec.num_categories - 1)(rng);
        auto noise = draw();
        std::vector<double> v(w.k);
        for (std::size_t d = 0; d < w.k; ++d) v[d] = 0.8 * centroid[c][d] + 0.6 * noise[d];
        w.item_price.push_back(10.0 + 3.0 * proj(v, price_dir));
        w.item_latent.push_back(std::move(v));
        w.item_category.push_back(c + 1);
    }
    w.scenario_users.resize(spec.num_scenarios());
    for (std::size_t s = 0; s < spec.num_scenarios(); ++s)
        for (std::size_t u = 0; u < spec.users_in(s); ++u) {
            w.scenario_users[s].push_back(w.user_latent.size());
            auto v = draw();
            w.user_age.push_back(35.0 + 8.0 * proj(v, age_dir));
            w.user_latent.push_back(std::move(v));
            w.user_scenario.push_back(s);
        }
    if (spec.shared_users) {
        std::vector<std::size_t> all(w.user_latent.size());
        std::iota(all.begin(), all.end(), 0);
        for (auto& pool : w.scenario_users) pool = all;
    }
    return w;
}

inline FeatureSchema synthetic_schema(const SyntheticSpec& spec) {
    std::size_t users = 0;
    for (std::size_t s = 0; s < spec.num_scenarios(); ++s) users += spec.users_in(s);
    FeatureSchema schema;
    schema.global_dim = spec.global_dim;
    schema.specific_dim = spec.specific_dim;
    schema.num_scenarios = spec.num_scenarios();
    schema.max_seq_len = spec.max_seq_len;
    schema.fields = {
        {"user_id", FieldCategory::UserProfile, FieldKind::Categorical, users + 1, ""},
        {"user_age", FieldCategory::UserProfile, FieldKind::Numerical, 0, ""},
        {"item_id", FieldCategory::ItemProfile, FieldKind::Categorical, spec.num_items + 1, ""},
        {"item_category", FieldCategory::ItemProfile, FieldKind::Categorical, spec.num_categories + 1, ""},
        {"item_price", FieldCategory::ItemProfile, FieldKind::Numerical, 0, ""},
        {"hist_item_id", FieldCategory::UserBehavior, FieldKind::Sequence, 0, "item_id"},
        {"hist_item_category", FieldCategory::UserBehavior, FieldKind::Sequence, 0, "item_category"},
        {"scenario", FieldCategory::Context, FieldKind::Categorical, spec.num_scenarios(), ""},
    };
    schema.validate();
    return schema;
}

/// Expected positive rate of a generated dataset: the click probability averaged
/// exactly over each scenario's user pool and the item pool, weighted by traffic,
/// with label noise applied.
inline double expected_positive_rate(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    const auto w = make_world(spec, rng);
    double total = 0.0, weight = 0.0;
    for (std::size_t s = 0; s < spec.num_scenarios(); ++s) {
        double mean = 0.0;
        for (auto u : w.scenario_users[s])
            for (std::size_t i = 0; i < spec.num_items; ++i) mean += logistic(w.logit(spec, s, u, i));
        mean /= static_cast<double>(w.scenario_users[s].size() * spec.num_items);
        total += static_cast<double>(spec.samples_per_scenario[s]) * mean;
        weight += static_cast<double>(spec.samples_per_scenario[s]);
    }
    const double p = total / weight;
    return p * (1.0 - spec.label_noise) + (1.0 - p) * spec.label_noise;
}

/// Draws a dataset. Timestamps are uniform over `days` days; the final `test_days`
/// form the test period. Behavior sequences hold the user's earlier positive items,
/// newest first.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    const auto w = make_world(spec, rng);
    Dataset d;
    d.schema = synthetic_schema(spec);
    constexpr std::int64_t kDay = 86400;
    d.split_ts = static_cast<std::int64_t>(spec.days - spec.test_days) * kDay;
    const std::int64_t horizon = static_cast<std::int64_t>(spec.days) * kDay;

    struct Draw {
        std::int64_t ts;
        std::size_t scenario, user, item;
        int label;
    };
    std::vector<Draw> draws;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> when(0, horizon - 1);
    std::uniform_int_distribution<std::size_t> pick_item(0, spec.num_items - 1);
    for (std::size_t s = 0; s < spec.num_scenarios(); ++s) {
        const auto& pool = w.scenario_users[s];
        std::uniform_int_distribution<std::size_t> pick_user(0, pool.size() - 1);
        for (std::size_t n = 0; n < spec.samples_per_scenario[s]; ++n) {
            Draw x;
            x.scenario = s;
            x.user = pool[pick_user(rng)];
            x.item = pick_item(rng);
            x.ts = when(rng);
            int y = unit(rng) < logistic(w.logit(spec, s, x.user, x.item)) ? 1 : 0;
            if (unit(rng) < spec.label_noise) y = 1 - y;
            x.label = y;
            draws.push_back(x);
        }
    }
    std::stable_sort(draws.begin(), draws.end(), [](const Draw& a, const Draw& b) { return a.ts < b.ts; });

    std::vector<std::vector<std::size_t>> positives(w.user_latent.size());
    for (const auto& x : draws) {
        ExampleRecord r;
        r.categorical["user_id"] = static_cast<std::int64_t>(x.user + 1);
        r.categorical["item_id"] = static_cast<std::int64_t>(x.item + 1);
        r.categorical["item_category"] = static_cast<std::int64_t>(w.item_category[x.item]);
        r.numerical["user_age"] = w.user_age[x.user];
        r.numerical["item_price"] = w.item_price[x.item];
        const auto& hist = positives[x.user];
        for (std::size_t k = 0; k < hist.size() && k < spec.max_seq_len; ++k) {
            const std::size_t item = hist[hist.size() - 1 - k];
            r.behavior.push_back({{"hist_item_id", static_cast<std::int64_t>(item + 1)},
                                  {"hist_item_category", static_cast<std::int64_t>(w.item_category[item])}});
        }
        r.scenario = static_cast<std::int64_t>(x.scenario);
        r.ts = x.ts;
        r.label = x.label;
        if (x.label == 1) positives[x.user].push_back(x.item);
        d.records.push_back(std::move(r));
    }
    return d;
}

} // namespace saml
