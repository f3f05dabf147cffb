#pragma once

#include <stdexcept>
#include <string>

namespace igrpo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite weights or logits.
class NumericalStateError : public Error {
public:
    using Error::Error;
};

// A rollout group with fewer than two members.
class InvalidGroupError : public Error {
public:
    using Error::Error;
};

// Cached per-token log-probs do not line up with completion tokens.
class AlignmentError : public Error {
public:
    using Error::Error;
};

class PromptTooLongError : public Error {
public:
    using Error::Error;
};

class InvalidInputError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Training stopped because an update produced non-finite state.
class TrainingAborted : public Error {
public:
    using Error::Error;
};

}  // namespace igrpo
