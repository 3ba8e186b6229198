#pragma once

#include <stdexcept>
#include <string>

namespace commutesim {

enum class ErrorKind {
    Parse,         // malformed input document or response
    Validation,    // named constraint violated
    OutOfRange,    // value outside its valid range
    WrongCase,     // operation applied to the wrong scenario kind
    MissingEntry,  // replay script or cassette lookup miss
    Transport,     // network failure after retries
    Io,            // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::OutOfRange: return "out_of_range";
        case ErrorKind::WrongCase: return "wrong_case";
        case ErrorKind::MissingEntry: return "missing_entry";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace commutesim
