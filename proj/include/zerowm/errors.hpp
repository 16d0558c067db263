#pragma once

#include <stdexcept>
#include <string>

namespace zw {

// Invalid user-supplied value (out-of-range distortion parameter, bad bits string, ...).
class ParameterError : public std::invalid_argument {
public:
    explicit ParameterError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Violated operation precondition (empty dataset, shape mismatch, ...).
class PreconditionError : public std::invalid_argument {
public:
    explicit PreconditionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite value detected in a forward pass or a loss.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent architecture / shape wiring.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Codec or image processing failure.
class DistortionError : public std::runtime_error {
public:
    explicit DistortionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint write/read failure.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Stored blob does not match its manifest (size/version/id mismatch).
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

class NotFoundError : public std::runtime_error {
public:
    explicit NotFoundError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConflictError : public std::runtime_error {
public:
    explicit ConflictError(const std::string& msg) : std::runtime_error(msg) {}
};

// Signature optimization ended without reaching 100% clean-bit accuracy.
// Carries the accuracy actually reached so callers can report it.
class RegistrationError : public std::runtime_error {
public:
    RegistrationError(const std::string& msg, double final_accuracy)
        : std::runtime_error(msg), final_accuracy_(final_accuracy) {}
    double final_accuracy() const { return final_accuracy_; }

private:
    double final_accuracy_;
};

}  // namespace zw
