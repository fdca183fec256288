#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "saml/numerics/tensor.hpp"

namespace saml {

/// A trainable tensor with its gradient buffer.
///
/// Embedding tables are marked `sparse`: their gradient is written row by row
/// and `touched_rows` records which rows received a contribution this step so the
/// optimizer can skip the rest.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool sparse = false;
    std::vector<char> row_touched;  // sparse only; one flag per row
    std::vector<std::size_t> touched_rows;

    Parameter(std::string n, Tensor v, bool is_sparse = false)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), sparse(is_sparse) {
        if (sparse) row_touched.assign(value.rows(), 0);
    }

    void zero_grad() {
        if (sparse) {
            const std::size_t w = value.cols();
            for (auto r : touched_rows) {
                std::fill_n(grad.data() + r * w, w, 0.0);
                row_touched[r] = 0;
            }
            touched_rows.clear();
        } else {
            grad.fill(0.0);
        }
    }

    void touch_row(std::size_t r) {
        if (!row_touched[r]) {
            row_touched[r] = 1;
            touched_rows.push_back(r);
        }
    }
};

/// Ordered, name-addressable collection of parameters. Registration order is the
/// iteration order, which keeps optimizer updates and checkpoints deterministic.
class ParameterStore {
public:
    Parameter& add(std::string name, Tensor value, bool sparse = false) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        params_.push_back(std::make_unique<Parameter>(name, std::move(value), sparse));
        index_[name] = params_.size() - 1;
        return *params_.back();
    }

    Parameter& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return *params_[it->second];
    }
    const Parameter& get(const std::string& name) const {
        return const_cast<ParameterStore*>(this)->get(name);
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

} // namespace saml
