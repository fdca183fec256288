#pragma once

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saml/features/encoder.hpp"

namespace saml {

inline constexpr const char* kDatasetFormat = "saml-dataset/1";

/// Records plus the timestamp that separates the training and test periods.
/// Records with ts < split_ts are training data, the rest test data.
struct Dataset {
    FeatureSchema schema;
    std::vector<ExampleRecord> records;
    std::int64_t split_ts = 0;

    std::vector<ExampleRecord> train() const {
        std::vector<ExampleRecord> out;
        for (const auto& r : records)
            if (r.ts < split_ts) out.push_back(r);
        return out;
    }
    std::vector<ExampleRecord> test() const {
        std::vector<ExampleRecord> out;
        for (const auto& r : records)
            if (r.ts >= split_ts) out.push_back(r);
        return out;
    }
};

namespace detail {

inline const char* section_of(FieldCategory c) {
    switch (c) {
    case FieldCategory::UserProfile: return "user";
    case FieldCategory::ItemProfile: return "item";
    case FieldCategory::UserBehavior: return "behavior";
    case FieldCategory::Context: return "context";
    }
    return "context";
}

inline nlohmann::json record_to_json(const FeatureSchema& schema, const ExampleRecord& r) {
    nlohmann::json j = {{"user", nlohmann::json::object()},
                        {"item", nlohmann::json::object()},
                        {"behavior", nlohmann::json::array()},
                        {"context", nlohmann::json::object()},
                        {"label", r.label}};
    for (const auto& [k, v] : r.categorical) j[section_of(schema.field(k).category)][k] = v;
    for (const auto& [k, v] : r.numerical) j[section_of(schema.field(k).category)][k] = v;
    for (const auto& item : r.behavior) j["behavior"].push_back(item);
    j["context"][schema.scenario_field] = r.scenario;
    j["context"]["ts"] = r.ts;
    return j;
}

inline ExampleRecord record_from_json(const FeatureSchema& schema, const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("record must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "user" && key != "item" && key != "behavior" && key != "context" && key != "label")
            throw DataError("unknown record key '" + key + "'");
    ExampleRecord r;
    if (!j.contains("label") || !j["label"].is_number_integer()) throw DataError("field 'label' must be an integer");
    r.label = j["label"].get<int>();
    if (!j.contains("context") || !j["context"].is_object()) throw DataError("record has no 'context' object");
    const auto& ctx = j["context"];
    if (!ctx.contains(schema.scenario_field) || !ctx[schema.scenario_field].is_number_integer())
        throw DataError("field '" + schema.scenario_field + "' must be an integer");
    if (!ctx.contains("ts") || !ctx["ts"].is_number_integer()) throw DataError("field 'ts' must be an integer");
    r.scenario = ctx[schema.scenario_field].get<std::int64_t>();
    r.ts = ctx["ts"].get<std::int64_t>();
    for (const char* section : {"user", "item", "context"}) {
        if (!j.contains(section)) continue;
        if (!j[section].is_object()) throw DataError(std::string("'") + section + "' must be an object");
        for (const auto& [k, v] : j[section].items()) {
            if (std::string(section) == "context" && (k == "ts" || k == schema.scenario_field)) continue;
            if (!schema.has_field(k)) throw DataError("unknown field '" + k + "'");
            const auto& f = schema.field(k);
            if (section_of(f.category) != std::string(section))
                throw DataError("field '" + k + "' belongs in '" + section_of(f.category) + "', found in '" + section +
                                "'");
            if (f.kind == FieldKind::Categorical) {
                if (!v.is_number_integer()) throw DataError("field '" + k + "' must be an integer id");
                r.categorical[k] = v.get<std::int64_t>();
            } else if (f.kind == FieldKind::Numerical) {
                if (!v.is_number()) throw DataError("field '" + k + "' must be a number");
                r.numerical[k] = v.get<double>();
            } else {
                throw DataError("sequence field '" + k + "' must appear inside 'behavior'");
            }
        }
    }
    if (j.contains("behavior")) {
        if (!j["behavior"].is_array()) throw DataError("'behavior' must be an array");
        for (const auto& item : j["behavior"]) {
            if (!item.is_object()) throw DataError("behavior items must be objects");
            std::map<std::string, std::int64_t> m;
            for (const auto& [k, v] : item.items()) {
                if (!v.is_number_integer()) throw DataError("behavior field '" + k + "' must be an integer id");
                m[k] = v.get<std::int64_t>();
            }
            r.behavior.push_back(std::move(m));
        }
    }
    validate_record(schema, r);
    return r;
}

} // namespace detail

inline void write_dataset(const Dataset& d, std::ostream& out) {
    nlohmann::json header = {{"format", kDatasetFormat}, {"schema", to_json_value(d.schema)}, {"split_ts", d.split_ts}};
    out << header.dump() << '\n';
    for (const auto& r : d.records) out << detail::record_to_json(d.schema, r).dump() << '\n';
}

inline void write_dataset(const Dataset& d, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    write_dataset(d, f);
    if (!f) throw DataError("failed writing '" + path + "'");
}

/// Reads a line-delimited dataset. Line 1 is the header; every later nonblank line
/// is one record. Errors carry the 1-based line number. An empty stream yields an
/// empty dataset.
inline Dataset read_dataset(std::istream& in, const std::string& source = "<stream>") {
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    auto fail = [&](const std::string& msg) {
        throw DataError(source + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(std::string("malformed line: ") + e.what());
        }
        if (!have_header) {
            try {
                if (!j.is_object() || j.value("format", "") != kDatasetFormat)
                    fail(std::string("header must carry format '") + kDatasetFormat + "'");
                d.schema = schema_from_json(j.at("schema"));
                d.split_ts = j.at("split_ts").get<std::int64_t>();
            } catch (const DataError&) {
                throw;
            } catch (const std::exception& e) {
                fail(std::string("bad header: ") + e.what());
            }
            have_header = true;
            continue;
        }
        try {
            d.records.push_back(detail::record_from_json(d.schema, j));
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }
    return d;
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open dataset '" + path + "'");
    return read_dataset(f, path);
}

/// Encoded examples with a fixed per-epoch shuffle.
class BatchIterator {
public:
    BatchIterator(const std::vector<EncodedExample>& examples, std::size_t batch_size, std::uint64_t seed)
        : examples_(&examples), batch_size_(batch_size), seed_(seed) {
        if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    }

    /// Row order for `epoch`, a permutation seeded by (seed, epoch).
    std::vector<std::size_t> order(std::size_t epoch) const {
        std::vector<std::size_t> idx(examples_->size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ull + epoch);
        std::shuffle(idx.begin(), idx.end(), rng);
        return idx;
    }

    /// Index lists of the batches of `epoch`; the final batch may be partial.
    std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const {
        auto idx = order(epoch);
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t i = 0; i < idx.size(); i += batch_size_)
            out.emplace_back(idx.begin() + i, idx.begin() + std::min(idx.size(), i + batch_size_));
        return out;
    }

    EncodedBatch gather(const std::vector<std::size_t>& rows) const {
        std::vector<const EncodedExample*> ptrs;
        for (auto i : rows) ptrs.push_back(&(*examples_)[i]);
        return EncodedBatch::from(std::span<const EncodedExample* const>(ptrs));
    }

    template <class F>
    void for_each(std::size_t epoch, F&& f) const {
        for (const auto& rows : batches(epoch)) f(gather(rows));
    }

private:
    const std::vector<EncodedExample>* examples_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

/// Sequential batches without shuffling, for evaluation.
inline std::vector<EncodedBatch> sequential_batches(const std::vector<EncodedExample>& examples, std::size_t size) {
    if (size == 0) throw ConfigError("batch size must be at least 1");
    std::vector<EncodedBatch> out;
    for (std::size_t i = 0; i < examples.size(); i += size) {
        std::vector<const EncodedExample*> ptrs;
        for (std::size_t k = i; k < std::min(examples.size(), i + size); ++k) ptrs.push_back(&examples[k]);
        out.push_back(EncodedBatch::from(std::span<const EncodedExample* const>(ptrs)));
    }
    return out;
}

} // namespace saml
