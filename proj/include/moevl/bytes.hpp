#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

// Explicit little-endian scalar IO for the binary file formats. Reads report
// success so callers can turn truncation into their own error type with a
// byte offset.

namespace moevl::bytes {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) return false;
    v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
        static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    return true;
}

inline bool read_u64(std::istream& in, std::uint64_t& v) {
    std::uint32_t lo, hi;
    if (!read_u32(in, lo) || !read_u32(in, hi)) return false;
    v = static_cast<std::uint64_t>(hi) << 32 | lo;
    return true;
}

inline bool read_f32(std::istream& in, float& v) {
    std::uint32_t bits;
    if (!read_u32(in, bits)) return false;
    std::memcpy(&v, &bits, 4);
    return true;
}

inline bool read_f64(std::istream& in, double& v) {
    std::uint64_t bits;
    if (!read_u64(in, bits)) return false;
    std::memcpy(&v, &bits, 8);
    return true;
}

}  // namespace moevl::bytes
