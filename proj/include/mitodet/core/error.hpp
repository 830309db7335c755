#pragma once

#include <stdexcept>
#include <string>

namespace mitodet {

// Base for all library errors. CLI maps these to exit code 1.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidDomain : Error {
    explicit InvalidDomain(const std::string& msg) : Error(msg) {}
};

struct InvalidAngle : Error {
    explicit InvalidAngle(const std::string& msg) : Error(msg) {}
};

struct InvalidPixelRange : Error {
    explicit InvalidPixelRange(const std::string& msg) : Error(msg) {}
};

struct PlacementFailure : Error {
    explicit PlacementFailure(const std::string& msg) : Error(msg) {}
};

struct CorpusFormatError : Error {
    explicit CorpusFormatError(const std::string& msg) : Error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct InsufficientDomains : Error {
    explicit InsufficientDomains(const std::string& msg) : Error(msg) {}
};

struct InsufficientForeground : Error {
    explicit InsufficientForeground(const std::string& msg) : Error(msg) {}
};

struct InvalidLevel : Error {
    explicit InvalidLevel(const std::string& msg) : Error(msg) {}
};

struct InvalidIteration : Error {
    explicit InvalidIteration(const std::string& msg) : Error(msg) {}
};

struct TileError : Error {
    explicit TileError(const std::string& msg) : Error(msg) {}
};

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace mitodet
