#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace moevl {

// Shortest decimal text that parses back to exactly the same double. Used by
// every text format so round trips are lossless regardless of stream state.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace moevl
