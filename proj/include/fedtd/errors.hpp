#pragma once

#include <stdexcept>
#include <string>

namespace fedtd {

/// Invalid or inconsistent inputs: dimension mismatches, bad config values,
/// schema violations. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A linear solve or diagnostic fell outside its tolerance. Carries the name
/// of the quantity that failed. CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Rejection sampling exhausted its retry budget. CLI maps this to exit 3.
class GenerationError : public std::runtime_error {
public:
    explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

/// A federated round received the wrong number of agent messages.
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterate left the finite range during a run. CLI maps this to exit 4.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure on an output or input artifact.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedtd
