#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "saml/errors.hpp"

namespace saml {

enum class FieldCategory { UserProfile, ItemProfile, UserBehavior, Context };
enum class FieldKind { Categorical, Numerical, Sequence };

inline const char* to_string(FieldCategory c) {
    switch (c) {
        case FieldCategory::UserProfile: return "user";
        case FieldCategory::ItemProfile: return "item";
        case FieldCategory::UserBehavior: return "behavior";
        case FieldCategory::Context: return "context";
    }
    return "?";
}

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::Categorical: return "categorical";
        case FieldKind::Numerical: return "numerical";
        case FieldKind::Sequence: return "sequence";
    }
    return "?";
}

inline FieldCategory parse_category(const std::string& s) {
    if (s == "user") return FieldCategory::UserProfile;
    if (s == "item") return FieldCategory::ItemProfile;
    if (s == "behavior") return FieldCategory::UserBehavior;
    if (s == "context") return FieldCategory::Context;
    throw ConfigError("unknown field category '" + s + "' (expected user|item|behavior|context)");
}

inline FieldKind parse_kind(const std::string& s) {
    if (s == "categorical") return FieldKind::Categorical;
    if (s == "numerical") return FieldKind::Numerical;
    if (s == "sequence") return FieldKind::Sequence;
    throw ConfigError("unknown field kind '" + s + "' (expected categorical|numerical|sequence)");
}

/// One input field.
///
/// Categorical ids are in [1, vocab_size); id 0 is reserved for padding and
/// out-of-vocabulary values. A sequence field is one sub-field of each behavior item;
/// with `shares` set it reads the embedding tables of that categorical field (e.g. the
/// behavior item id shares the target item-id tables).
struct FieldSpec {
    std::string name;
    FieldCategory category = FieldCategory::UserProfile;
    FieldKind kind = FieldKind::Categorical;
    std::size_t vocab_size = 0;
    std::string shares;

    bool operator==(const FieldSpec&) const = default;
};

/// Field layout plus the dimensions that size the feature representation.
struct FeatureSchema {
    std::vector<FieldSpec> fields;
    std::string scenario_field = "scenario";
    std::size_t global_dim = 12;    // K_g
    std::size_t specific_dim = 4;   // K_l
    std::size_t num_scenarios = 5;  // N
    std::size_t max_seq_len = 15;   // L

    const FieldSpec& field(const std::string& name) const {
        for (const auto& f : fields)
            if (f.name == name) return f;
        throw ConfigError("schema has no field '" + name + "'");
    }

    bool has_field(const std::string& name) const {
        for (const auto& f : fields)
            if (f.name == name) return true;
        return false;
    }

    /// Embedded categorical fields, in declaration order (the scenario field is routing only).
    std::vector<const FieldSpec*> categorical_fields() const {
        std::vector<const FieldSpec*> out;
        for (const auto& f : fields)
            if (f.kind == FieldKind::Categorical && f.name != scenario_field) out.push_back(&f);
        return out;
    }

    std::vector<const FieldSpec*> numerical_fields() const {
        std::vector<const FieldSpec*> out;
        for (const auto& f : fields)
            if (f.kind == FieldKind::Numerical) out.push_back(&f);
        return out;
    }

    std::vector<const FieldSpec*> sequence_fields() const {
        std::vector<const FieldSpec*> out;
        for (const auto& f : fields)
            if (f.kind == FieldKind::Sequence) out.push_back(&f);
        return out;
    }

    /// Vocabulary of the table a field reads (its own or the shared one).
    std::size_t table_vocab(const FieldSpec& f) const {
        return f.shares.empty() ? f.vocab_size : field(f.shares).vocab_size;
    }

    void validate() const {
        if (global_dim < 1) throw ConfigError("schema: global_dim must be >= 1");
        if (specific_dim < 1) throw ConfigError("schema: specific_dim must be >= 1");
        if (num_scenarios < 2) throw ConfigError("schema: num_scenarios must be >= 2");
        if (max_seq_len < 1) throw ConfigError("schema: max_seq_len must be >= 1");
        std::set<std::string> names;
        std::size_t scenario_count = 0;
        for (const auto& f : fields) {
            if (f.name.empty()) throw ConfigError("schema: field with empty name");
            if (!names.insert(f.name).second) throw ConfigError("schema: duplicate field '" + f.name + "'");
            if (f.name == "ts" || f.name == "label")
                throw ConfigError("schema: field name '" + f.name + "' is reserved");
            const bool seq_cat = f.category == FieldCategory::UserBehavior;
            if (seq_cat != (f.kind == FieldKind::Sequence))
                throw ConfigError("schema: field '" + f.name + "' must be a sequence iff it is a behavior field");
            if (f.name == scenario_field) {
                ++scenario_count;
                if (f.category != FieldCategory::Context || f.kind != FieldKind::Categorical)
                    throw ConfigError("schema: scenario field '" + f.name + "' must be a categorical context field");
                if (f.vocab_size != num_scenarios)
                    throw ConfigError("schema: scenario field vocab_size must equal num_scenarios");
                continue;
            }
            if (f.kind == FieldKind::Numerical) continue;
            if (!f.shares.empty()) {
                if (f.kind != FieldKind::Sequence)
                    throw ConfigError("schema: only sequence fields may share tables ('" + f.name + "')");
                if (!has_field(f.shares)) throw ConfigError("schema: field '" + f.name + "' shares unknown field '" + f.shares + "'");
                const auto& target = field(f.shares);
                if (target.kind != FieldKind::Categorical || target.name == scenario_field)
                    throw ConfigError("schema: field '" + f.name + "' must share an embedded categorical field");
            } else if (f.vocab_size < 2) {
                throw ConfigError("schema: field '" + f.name + "' needs vocab_size >= 2 (index 0 is reserved)");
            }
        }
        if (scenario_count != 1) throw ConfigError("schema: exactly one scenario field named '" + scenario_field + "' is required");
    }

    bool operator==(const FeatureSchema&) const = default;
};

inline nlohmann::json to_json_value(const FeatureSchema& s) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& f : s.fields) {
        nlohmann::json j{{"name", f.name}, {"category", to_string(f.category)}, {"kind", to_string(f.kind)}};
        if (f.kind != FieldKind::Numerical && f.shares.empty()) j["vocab_size"] = f.vocab_size;
        if (!f.shares.empty()) j["shares"] = f.shares;
        fields.push_back(std::move(j));
    }
    return nlohmann::json{{"fields", fields},
                          {"scenario_field", s.scenario_field},
                          {"global_dim", s.global_dim},
                          {"specific_dim", s.specific_dim},
                          {"num_scenarios", s.num_scenarios},
                          {"max_seq_len", s.max_seq_len}};
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
    static const std::set<std::string> kKeys{"fields", "scenario_field", "global_dim", "specific_dim", "num_scenarios",
                                             "max_seq_len"};
    static const std::set<std::string> kFieldKeys{"name", "category", "kind", "vocab_size", "shares"};
    if (!j.is_object()) throw ConfigError("schema must be an object");
    for (const auto& [k, _] : j.items())
        if (!kKeys.count(k)) throw ConfigError("schema: unknown key '" + k + "'");
    FeatureSchema s;
    try {
        s.scenario_field = j.value("scenario_field", s.scenario_field);
        s.global_dim = j.value("global_dim", s.global_dim);
        s.specific_dim = j.value("specific_dim", s.specific_dim);
        s.num_scenarios = j.value("num_scenarios", s.num_scenarios);
        s.max_seq_len = j.value("max_seq_len", s.max_seq_len);
        for (const auto& fj : j.at("fields")) {
            for (const auto& [k, _] : fj.items())
                if (!kFieldKeys.count(k)) throw ConfigError("schema field: unknown key '" + k + "'");
            FieldSpec f;
            f.name = fj.at("name").get<std::string>();
            f.category = parse_category(fj.at("category").get<std::string>());
            f.kind = parse_kind(fj.at("kind").get<std::string>());
            f.vocab_size = fj.value("vocab_size", std::size_t{0});
            f.shares = fj.value("shares", std::string{});
            s.fields.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("schema: ") + e.what());
    }
    s.validate();
    return s;
}

/// 64-bit FNV-1a. Used for schema and data fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Fingerprint of the field layout (dimension settings excluded: they are model choices).
inline std::uint64_t schema_hash(const FeatureSchema& s) {
    auto j = to_json_value(s);
    j.erase("global_dim");
    j.erase("specific_dim");
    j.erase("max_seq_len");
    return fnv1a(j.dump());
}

} // namespace saml
