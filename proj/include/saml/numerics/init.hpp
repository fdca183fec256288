#pragma once

#include <cmath>
#include <random>

#include "saml/numerics/tensor.hpp"

namespace saml::init {

inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor t(Shape{fan_in, fan_out});
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

inline Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = n(rng);
    return t;
}

} // namespace saml::init
