#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace stabds {

/// Shortest round-trip decimal text for a double; "nan"/"inf" for non-finite.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace stabds
