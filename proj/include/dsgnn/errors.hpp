#pragma once

#include <stdexcept>
#include <string>

namespace dsgnn {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array shapes or axes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation precondition (e.g. non-scalar loss passed to backward).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameter or flag combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The evaluation protocol cannot be carried out (too few stations, empty target set, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Dataset manifest or raw files are inconsistent.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Supergrid graph is malformed.
class GraphError : public Error {
public:
    using Error::Error;
};

/// Training diverged or produced a non-finite value.
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace dsgnn
