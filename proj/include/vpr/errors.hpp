#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vpr {

/// Malformed VPRF/VPRG payload or manifest. Carries the byte offset when known.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    explicit FormatError(const std::string& what)
        : std::runtime_error(what), offset_(UINT64_MAX) {}

    /// Same error with `context` (e.g. the file path) prefixed to the message.
    static FormatError with_context(const std::string& context, const FormatError& e) {
        FormatError out(context + ": " + e.what());
        out.offset_ = e.offset_;
        return out;
    }

    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

/// Missing or unreadable artifact (file, id).
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure while writing.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or config invariant.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace vpr
