#pragma once

#include <stdexcept>
#include <string>

namespace agriqa {

enum class ErrorCode {
    InvalidArgument,
    Io,
    Parse,
    Validation,
    NoData,
    ProviderTimeout,
    ProviderStatus,
    ProviderMalformed,
    ProviderUnreachable,
    ProviderEmpty,
    Network,
    Internal,
};

const char* to_string(ErrorCode code) noexcept;

/// Base exception for everything the library throws on a contract violation.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace agriqa
