#pragma once

#include <stdexcept>
#include <string>

namespace scaforge {

enum class FormatErrc {
    io_error,
    bad_magic,
    unsupported_version,
    unsupported_dtype,
    bad_flags,
    truncated,
    length_mismatch,
    value_out_of_range,
    label_mismatch,
};

const char* to_string(FormatErrc code);

/// Raised by every binary reader/writer in the library. The code tells
/// callers which structural check failed.
class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

/// Shape or parameter mismatch between a model and its input.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace scaforge
