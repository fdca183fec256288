#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "saml/features/encoder.hpp"
#include "saml/model/saml_model.hpp"

namespace saml {

inline constexpr const char* kCheckpointFormat = "saml-checkpoint/1";

inline nlohmann::json to_json_value(const ModelConfig& c) {
    nlohmann::json j{{"variant", to_string(c.variant)},
                     {"hidden", c.hidden},
                     {"heads", c.heads},
                     {"mutual_layer", c.mutual_layer},
                     {"gate_bias_init", c.gate_bias_init},
                     {"target_weight", c.target_weight},
                     {"seed", c.seed}};
    j["gate_override"] = c.gate_override ? nlohmann::json(*c.gate_override) : nlohmann::json(nullptr);
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.variant = parse_variant(j.at("variant").get<std::string>());
        c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
        c.heads = j.at("heads").get<std::size_t>();
        c.mutual_layer = j.at("mutual_layer").get<std::size_t>();
        c.gate_bias_init = j.at("gate_bias_init").get<double>();
        c.target_weight = j.at("target_weight").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("gate_override") && !j["gate_override"].is_null())
            c.gate_override = j["gate_override"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

/// A trained model with everything needed to score new data: schema, model
/// configuration, the numeric normalization fitted on the training split, and every
/// parameter tensor by name.
struct LoadedModel {
    std::unique_ptr<CtrModel> model;
    NumericStats stats;
};

inline nlohmann::json checkpoint_json(CtrModel& model, const NumericStats& stats) {
    nlohmann::json params = nlohmann::json::array();
    for (auto& [name, p] : model.named_parameters())
        params.push_back({{"name", name}, {"shape", p->value.shape()}, {"values", p->value.storage()}});
    std::ostringstream hash;
    hash << std::hex << schema_hash(model.schema());
    return {{"format", kCheckpointFormat},
            {"variant", to_string(model.kind())},
            {"schema_hash", hash.str()},
            {"schema", to_json_value(model.schema())},
            {"model", to_json_value(model.config())},
            {"numeric_stats", {{"mean", stats.mean}, {"stddev", stats.stddev}}},
            {"parameters", params}};
}

inline void save_checkpoint(const std::string& path, CtrModel& model, const NumericStats& stats) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << checkpoint_json(model, stats).dump() << '\n';
    if (!f) throw DataError("failed writing '" + path + "'");
}

inline LoadedModel checkpoint_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
        throw DataError(std::string("checkpoint must carry format '") + kCheckpointFormat + "'");
    LoadedModel out;
    FeatureSchema schema = schema_from_json(j.at("schema"));
    std::ostringstream hash;
    hash << std::hex << schema_hash(schema);
    if (j.at("schema_hash").get<std::string>() != hash.str()) throw DataError("checkpoint: schema hash mismatch");
    out.model = make_variant(schema, model_config_from_json(j.at("model")));
    out.stats.mean = j.at("numeric_stats").at("mean").get<std::vector<double>>();
    out.stats.stddev = j.at("numeric_stats").at("stddev").get<std::vector<double>>();
    std::map<std::string, Parameter*> by_name;
    for (auto& [name, p] : out.model->named_parameters()) by_name[name] = p;
    std::size_t loaded = 0;
    for (const auto& pj : j.at("parameters")) {
        const auto name = pj.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint: unexpected parameter '" + name + "'");
        const auto shape = pj.at("shape").get<Shape>();
        if (shape != it->second->value.shape())
            throw DataError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(it->second->value.shape()));
        it->second->value = Tensor(shape, pj.at("values").get<std::vector<double>>());
        ++loaded;
    }
    if (loaded != by_name.size()) throw DataError("checkpoint: missing parameters");
    return out;
}

inline LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path + "': " + e.what());
    }
    try {
        return checkpoint_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path + "': " + e.what());
    }
}

/// Checks that data encoded under `data` can be scored by a model built for `model`.
/// Names the first field that differs.
inline void require_compatible(const FeatureSchema& model, const FeatureSchema& data) {
    if (model.num_scenarios != data.num_scenarios)
        throw DataError("schema mismatch: model has " + std::to_string(model.num_scenarios) + " scenarios, data has " +
                        std::to_string(data.num_scenarios));
    for (const auto& f : model.fields) {
        if (!data.has_field(f.name)) throw DataError("schema mismatch: data lacks field '" + f.name + "'");
        if (!(data.field(f.name) == f)) throw DataError("schema mismatch: field '" + f.name + "' differs");
    }
    for (const auto& f : data.fields)
        if (!model.has_field(f.name)) throw DataError("schema mismatch: model lacks field '" + f.name + "'");
}

} // namespace saml
