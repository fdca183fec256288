#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saml/model/saml_model.hpp"
#include "saml/pipeline/train.hpp"

namespace saml {

/// Settings of one training run. Every key has a default; config files may set any
/// subset and unknown keys are rejected.
///
/// Keys: variant, hidden, heads, mutual_layer, gate_bias_init, target_weight,
/// global_dim, specific_dim, max_seq_len, lr, batch_size, epochs, seed,
/// stop_at_train_auc, eval_batch_size, data, out.
struct RunConfig {
    VariantKind variant = VariantKind::Full;
    std::vector<std::size_t> hidden{128, 64};
    std::size_t heads = 4;
    std::size_t mutual_layer = 1;
    double gate_bias_init = -2.0;
    double target_weight = 1.0;
    std::size_t global_dim = 12;
    std::size_t specific_dim = 4;
    std::size_t max_seq_len = 15;
    double lr = 5e-4;
    std::size_t batch_size = 128;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    std::optional<double> stop_at_train_auc;
    std::size_t eval_batch_size = 1024;
    std::string data;
    std::string out = ".";

    ModelConfig model_config() const {
        ModelConfig m;
        m.variant = variant;
        m.hidden = hidden;
        m.heads = heads;
        m.mutual_layer = mutual_layer;
        m.gate_bias_init = gate_bias_init;
        m.target_weight = target_weight;
        m.seed = seed;
        return m;
    }

    TrainOptions train_options() const {
        TrainOptions t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.adam.lr = lr;
        t.seed = seed;
        t.stop_at_train_auc = stop_at_train_auc;
        t.eval_batch_size = eval_batch_size;
        return t;
    }

    /// The data schema with this run's embedding and sequence dimensions.
    FeatureSchema apply_dims(FeatureSchema s) const {
        s.global_dim = global_dim;
        s.specific_dim = specific_dim;
        s.max_seq_len = max_seq_len;
        s.validate();
        return s;
    }

    void validate() const {
        if (hidden.empty()) throw ConfigError("config: hidden must list at least one width");
        if (batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
        if (heads == 0 || global_dim % heads != 0)
            throw ConfigError("config: global_dim must be divisible by heads");
        if (mutual_layer < 1 || mutual_layer > hidden.size())
            throw ConfigError("config: mutual_layer must lie in [1, " + std::to_string(hidden.size()) + "]");
    }
};

inline nlohmann::json to_json_value(const RunConfig& c) {
    nlohmann::json j{{"variant", to_string(c.variant)},
                     {"hidden", c.hidden},
                     {"heads", c.heads},
                     {"mutual_layer", c.mutual_layer},
                     {"gate_bias_init", c.gate_bias_init},
                     {"target_weight", c.target_weight},
                     {"global_dim", c.global_dim},
                     {"specific_dim", c.specific_dim},
                     {"max_seq_len", c.max_seq_len},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"seed", c.seed},
                     {"eval_batch_size", c.eval_batch_size},
                     {"data", c.data},
                     {"out", c.out}};
    j["stop_at_train_auc"] = c.stop_at_train_auc ? nlohmann::json(*c.stop_at_train_auc) : nlohmann::json(nullptr);
    return j;
}

/// Overlays the keys of `j` onto `c`.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be an object");
    const auto known = to_json_value(RunConfig{});
    for (const auto& [k, _] : j.items())
        if (!known.contains(k)) throw ConfigError("config: unknown key '" + k + "'");
    try {
        if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
        c.hidden = j.value("hidden", c.hidden);
        c.heads = j.value("heads", c.heads);
        c.mutual_layer = j.value("mutual_layer", c.mutual_layer);
        c.gate_bias_init = j.value("gate_bias_init", c.gate_bias_init);
        c.target_weight = j.value("target_weight", c.target_weight);
        c.global_dim = j.value("global_dim", c.global_dim);
        c.specific_dim = j.value("specific_dim", c.specific_dim);
        c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.seed = j.value("seed", c.seed);
        c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
        c.data = j.value("data", c.data);
        c.out = j.value("out", c.out);
        if (j.contains("stop_at_train_auc"))
            c.stop_at_train_auc = j["stop_at_train_auc"].is_null()
                                      ? std::nullopt
                                      : std::optional<double>(j["stop_at_train_auc"].get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

/// Parses a `key=value` override. The value is read as JSON when possible and as a
/// plain string otherwise.
inline nlohmann::json parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' must look like key=value");
    const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
    nlohmann::json v = nlohmann::json::parse(raw, nullptr, false);
    if (v.is_discarded()) v = raw;
    return nlohmann::json{{key, v}};
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path + "': " + e.what());
    }
}

} // namespace saml
