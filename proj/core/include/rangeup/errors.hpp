#pragma once

#include <stdexcept>
#include <string>

namespace rangeup {

// Base class for all library errors. The CLI maps these to a one-line
// "error: <category>: <detail>" message and a nonzero exit code.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& detail)
        : std::runtime_error(category + ": " + detail), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

// Degenerate geometry (e.g. a point on the sensor axis).
class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& detail) : Error("geometry", detail) {}
};

// Malformed or truncated files.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& detail) : Error("format", detail) {}
};

// Bad arguments to an operation (dimension mismatch, invalid factor, ...).
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& detail) : Error("argument", detail) {}
};

// Beam-model estimation failed (too few peaks, degenerate input).
class CalibrationError : public Error {
public:
    explicit CalibrationError(const std::string& detail) : Error("calibration", detail) {}
};

// A metric is undefined for the given inputs (empty cloud, no in-bounds mass).
class MetricError : public Error {
public:
    explicit MetricError(const std::string& detail) : Error("metric", detail) {}
};

// Invalid run configuration or weight/config mismatch.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& detail) : Error("config", detail) {}
};

} // namespace rangeup
