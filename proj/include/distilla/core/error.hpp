// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace distilla {

enum class Errc {
    invalid_argument,
    format,
    consistency,
    insufficient_data,
    layout_mismatch,
    shape_mismatch,
    out_of_range,
    missing_stage,
    degenerate_trajectory,
    anchor_span,
    empty_bin,
    config,
    io,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline void require(bool condition, Errc code, const std::string& message) {
    if (!condition) throw Error(code, message);
}

}  // namespace distilla
