#pragma once

#include <stdexcept>
#include <string>

namespace saml {

/// Shape or width disagreement between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Caller broke an operation's precondition (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid model, schema or run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or schema-incompatible input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A metric is not defined for the given input (single-class AUC, base AUC of 0.5).
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

} // namespace saml
