#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "e3d/tensor.hpp"

namespace e3d {

// "DMAP" container: magic, version u32 LE, dtype u8 (1=f32, 2=f64),
// five u32 LE dims, raw little-endian values.
inline constexpr std::uint32_t kDmapVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename T>
constexpr std::uint8_t dtype_code() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? 1 : 2;
}

}  // namespace detail

template <typename T>
void write_dmap(std::ostream& os, const Tensor<T>& t) {
    os.write("DMAP", 4);
    detail::write_u32(os, kDmapVersion);
    const std::uint8_t code = detail::dtype_code<T>();
    os.write(reinterpret_cast<const char*>(&code), 1);
    const Shape5& s = t.shape();
    for (index_t dim : {s.n, s.c, s.d, s.h, s.w}) {
        detail::write_u32(os, static_cast<std::uint32_t>(dim));
    }
    // Host is little-endian; raw dump matches the wire format.
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * static_cast<index_t>(sizeof(T))));
    if (!os) throw std::runtime_error("write_dmap: stream write failed");
}

template <typename T>
void write_dmap(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_dmap: cannot open " + path);
    write_dmap(os, t);
}

// Reads a DMAP container; values stored in the other precision are converted.
template <typename T>
Tensor<T> read_dmap(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DMAP", 4) != 0) {
        throw std::runtime_error("read_dmap: bad magic bytes");
    }
    const std::uint32_t version = detail::read_u32(is);
    if (version != kDmapVersion) {
        throw std::runtime_error("read_dmap: unsupported version " + std::to_string(version));
    }
    std::uint8_t code = 0;
    is.read(reinterpret_cast<char*>(&code), 1);
    if (code != 1 && code != 2) {
        throw std::runtime_error("read_dmap: unknown dtype code " + std::to_string(code));
    }
    Shape5 s;
    s.n = detail::read_u32(is);
    s.c = detail::read_u32(is);
    s.d = detail::read_u32(is);
    s.h = detail::read_u32(is);
    s.w = detail::read_u32(is);
    const index_t count = s.numel();
    Tensor<T> out(s);
    if (code == detail::dtype_code<T>()) {
        is.read(reinterpret_cast<char*>(out.data().data()),
                static_cast<std::streamsize>(count * static_cast<index_t>(sizeof(T))));
    } else if (code == 1) {
        std::vector<float> buf(static_cast<size_t>(count));
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * 4));
        for (index_t i = 0; i < count; ++i) out[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
    } else {
        std::vector<double> buf(static_cast<size_t>(count));
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * 8));
        for (index_t i = 0; i < count; ++i) out[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
    }
    if (!is) throw std::runtime_error("read_dmap: truncated stream");
    return out;
}

template <typename T>
Tensor<T> read_dmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_dmap: cannot open " + path);
    return read_dmap<T>(is);
}

}  // namespace e3d
