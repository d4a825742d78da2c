#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "copydet/errors.hpp"

// Little-endian POD stream helpers. Host is assumed little-endian
// (checked at build time below); all on-disk formats are LE.

namespace copydet {

static_assert(sizeof(float) == 4, "32-bit IEEE float required");

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoFailure("unexpected end of stream");
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    read_pod(in, v);
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    uint32_t n = 0;
    read_pod(in, n);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw IoFailure("unexpected end of stream");
    return s;
}

template <typename T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
    write_pod<uint64_t>(out, static_cast<uint64_t>(v.size()));
    if (!v.empty())
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_vec(std::istream& in) {
    uint64_t n = 0;
    read_pod(in, n);
    std::vector<T> v(n);
    if (n) {
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(T)));
        if (!in) throw IoFailure("unexpected end of stream");
    }
    return v;
}

inline void expect_magic(std::istream& in, const char magic[4], const char* what) {
    char got[4] = {};
    in.read(got, 4);
    if (!in || got[0] != magic[0] || got[1] != magic[1] || got[2] != magic[2] ||
        got[3] != magic[3])
        throw BadMagic(std::string("bad magic for ") + what);
}

} // namespace copydet
