// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace occfield {

// Exit-code contract used by the CLI: 0 ok, 2 input error, 3 numerical
// failure, 4 format error.
enum class FormatErrorKind { MagicMismatch, Truncation, DimOverflow, BadHeader };

class format_error : public std::runtime_error {
public:
    format_error(FormatErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    FormatErrorKind kind() const { return kind_; }

private:
    FormatErrorKind kind_;
};

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace occfield
