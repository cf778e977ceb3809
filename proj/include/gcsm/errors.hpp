#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gcsm {

// Every library failure carries a stable machine-readable code so the CLI can
// report it without string matching.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what, std::string code = "E_INVALID_ARGUMENT")
        : Error(std::move(code), what) {}
};

class UnsupportedDimension : public Error {
public:
    explicit UnsupportedDimension(const std::string& what)
        : Error("E_UNSUPPORTED_DIMENSION", what) {}
};

class UnsupportedInput : public Error {
public:
    explicit UnsupportedInput(const std::string& what) : Error("E_UNSUPPORTED_INPUT", what) {}
};

class ConfigurationError : public Error {
public:
    explicit ConfigurationError(const std::string& what) : Error("E_CONFIG", what) {}
};

class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, std::vector<double> jitter_ladder = {})
        : Error("E_NUMERICAL", what), ladder_(std::move(jitter_ladder)) {}

    [[nodiscard]] const std::vector<double>& jitter_ladder() const noexcept { return ladder_; }

private:
    std::vector<double> ladder_;
};

class DatasetError : public Error {
public:
    DatasetError(std::string code, const std::string& what) : Error(std::move(code), what) {}
};

}  // namespace gcsm
