#pragma once

#include <stdexcept>
#include <string>

namespace robmrag {

// Base for every data-level failure raised by the engine. The CLI maps these
// to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed bytes or text: bad magic, truncation, unparsable JSON.
class FormatError : public Error {
public:
    using Error::Error;
};

// Well-formed input that breaks an invariant (non-unit direction, NaN, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// Degenerate geometry: points behind the camera, missing depth, zero axes.
class GeometryError : public Error {
public:
    using Error::Error;
};

// Wraps a failure from one pipeline stage; what() is "<stage>: <message>".
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error(stage + ": " + message), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace robmrag
