#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace lhb {

/// Invalid input: mismatched dimensions, out-of-range parameters, bad preconditions.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative solver ran out of iterations. Carries the last iterate.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate)) {}

    const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

private:
    Eigen::VectorXd last_iterate_;
};

/// The problem has no information to fit (e.g. every observation weight is zero).
class DegenerateProblemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A policy was used in a state where it cannot act (e.g. no fitted model yet).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Tabular input could not be ingested. Names the offending column and row when known.
class IngestionError : public std::runtime_error {
public:
    IngestionError(const std::string& what, std::string column = {}, std::size_t row = 0)
        : std::runtime_error(what), column_(std::move(column)), row_(row) {}

    const std::string& column() const noexcept { return column_; }
    /// 1-based data row (header excluded); 0 when the error is not row-specific.
    std::size_t row() const noexcept { return row_; }

private:
    std::string column_;
    std::size_t row_;
};

/// Experiment configuration rejected. Names the key and the 1-based line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::string key, int line)
        : std::runtime_error(what), key_(std::move(key)), line_(line) {}

    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

private:
    std::string key_;
    int line_;
};

}  // namespace lhb
