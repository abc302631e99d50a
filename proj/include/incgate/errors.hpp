#pragma once

#include <stdexcept>
#include <string>

namespace incgate {

// Exit code conventions shared with the CLI: 1 usage, 2 data error, 3 internal.
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message, int exit_code = kExitData)
        : std::runtime_error(message), exit_code_(exit_code) {}

    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

#define INCGATE_DEFINE_ERROR(NAME)                              \
    class NAME : public Error {                                 \
    public:                                                     \
        explicit NAME(const std::string& message)               \
            : Error(std::string(#NAME) + ": " + message) {}     \
    }

INCGATE_DEFINE_ERROR(MalformedHost);
INCGATE_DEFINE_ERROR(UnknownInitiator);
INCGATE_DEFINE_ERROR(DuplicateRoot);
INCGATE_DEFINE_ERROR(InlineTerminal);
INCGATE_DEFINE_ERROR(SymbolOutOfRange);
INCGATE_DEFINE_ERROR(InvalidConfig);
INCGATE_DEFINE_ERROR(EmptyDataset);
INCGATE_DEFINE_ERROR(InvalidLength);
INCGATE_DEFINE_ERROR(ArityMismatch);
INCGATE_DEFINE_ERROR(InsufficientData);
INCGATE_DEFINE_ERROR(EmptySubset);
INCGATE_DEFINE_ERROR(InvalidSpec);
INCGATE_DEFINE_ERROR(ParseError);
INCGATE_DEFINE_ERROR(DigestMismatch);

#undef INCGATE_DEFINE_ERROR

}  // namespace incgate
