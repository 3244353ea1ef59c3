#pragma once

#include <charconv>
#include <string>

namespace flexpe {

// Shortest round-trip decimal form. Locale-independent, so reports are
// byte-stable across machines.
inline std::string fmt_num(double v) {
    if (v == 0.0) return "0";  // folds -0 as well
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Fixed number of decimals, for human-facing tables.
inline std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
    return std::string(buf, res.ptr);
}

}  // namespace flexpe
