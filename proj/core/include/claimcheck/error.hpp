#pragma once

#include <stdexcept>
#include <string>

namespace claimcheck {

// Error taxonomy mirrors the CLI exit codes: validation problems are the
// caller's fault (bad files, bad flags), backend errors come from the model
// service, everything else is internal.
enum class ErrorKind {
    kValidation,
    kParse,
    kBackend,
    kInternal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::kValidation: return 1;
            case ErrorKind::kBackend: return 2;
            case ErrorKind::kParse:
            case ErrorKind::kInternal: return 3;
        }
        return 3;
    }

private:
    ErrorKind kind_;
};

// Backend failures keep whatever the model produced before the failure so a
// run can be inspected post mortem.
class BackendError : public Error {
public:
    BackendError(const std::string& message, std::string partial_transcript = {})
        : Error(ErrorKind::kBackend, message),
          partial_transcript_(std::move(partial_transcript)) {}

    const std::string& partial_transcript() const noexcept { return partial_transcript_; }

private:
    std::string partial_transcript_;
};

[[noreturn]] inline void throw_validation(const std::string& msg) {
    throw Error(ErrorKind::kValidation, msg);
}

[[noreturn]] inline void throw_parse(const std::string& msg) {
    throw Error(ErrorKind::kParse, msg);
}

[[noreturn]] inline void throw_internal(const std::string& msg) {
    throw Error(ErrorKind::kInternal, msg);
}

}  // namespace claimcheck
