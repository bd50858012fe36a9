#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ksegment {

/// Base class for everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unusable input data: empty population, zero rows, impossible partition.
class DatasetError : public Error {
public:
    using Error::Error;
};

/// A column named in the schema mapping is missing from the CSV header.
class SchemaError : public DatasetError {
public:
    using DatasetError::DatasetError;
};

/// A cell failed to parse; carries the 1-based data-row index.
class ParseError : public DatasetError {
public:
    ParseError(const std::string& message, std::size_t row)
        : DatasetError("row " + std::to_string(row) + ": " + message), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

/// Not enough time periods (or records) to honor the requested split.
class SplitError : public Error {
public:
    using Error::Error;
};

/// Argument outside its mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class PredictionError : public Error {
public:
    using Error::Error;
};

/// Corrupt, truncated, or incompatible serialized artifacts.
class SerializationError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration; the message carries the offending key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace ksegment
