#pragma once

// Binary tensor file format:
//   magic "ATNS" | u32 LE version=1 | u8 dtype (0=f32, 1=f64) | u8 rank |
//   6 reserved zero bytes | rank x u64 LE dims | raw LE row-major payload

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>

#include "tensor.hpp"

namespace agentattn {

using TensorVariant = std::variant<Tensor<float>, Tensor<double>>;

namespace detail {

template <typename T>
constexpr std::uint8_t dtype_code() {
    if constexpr (std::is_same_v<T, float>)
        return 0;
    else
        return 1;
}

inline void put_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

inline std::uint64_t get_u64le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

template <typename T>
void save_tensor(const Tensor<T>& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("save_tensor: cannot open " + path.string());
    os.write("ATNS", 4);
    detail::put_u32le(os, 1);
    const std::uint8_t dtype = detail::dtype_code<T>();
    const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
    os.put(char(dtype));
    os.put(char(rank));
    const char zeros[6] = {0, 0, 0, 0, 0, 0};
    os.write(zeros, 6);
    for (std::size_t d : t.shape()) detail::put_u64le(os, d);
    // host is little-endian; payload written as stored
    os.write(reinterpret_cast<const char*>(t.ptr()),
             std::streamsize(t.size() * sizeof(T)));
    if (!os) throw io_error("save_tensor: write failed for " + path.string());
}

inline TensorVariant load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("load_tensor: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ATNS", 4) != 0)
        throw io_error("load_tensor: bad magic in " + path.string());
    const std::uint32_t version = detail::get_u32le(is);
    if (version != 1) throw io_error("load_tensor: unsupported version");
    const int dtype = is.get();
    const int rank = is.get();
    if (dtype != 0 && dtype != 1) throw io_error("load_tensor: unknown dtype code");
    if (rank < 1) throw io_error("load_tensor: rank must be >= 1");
    char reserved[6];
    is.read(reserved, 6);
    std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
    std::size_t n = 1;
    for (auto& d : shape) {
        d = std::size_t(detail::get_u64le(is));
        n *= d;
    }
    auto read_payload = [&](auto tag) -> TensorVariant {
        using T = decltype(tag);
        std::vector<T> data(n);
        is.read(reinterpret_cast<char*>(data.data()), std::streamsize(n * sizeof(T)));
        if (!is) throw io_error("load_tensor: truncated payload in " + path.string());
        return Tensor<T>(shape, std::move(data));
    };
    return dtype == 0 ? read_payload(float{}) : read_payload(double{});
}

template <typename T>
Tensor<T> load_tensor_as(const std::filesystem::path& path) {
    TensorVariant v = load_tensor(path);
    if (auto* p = std::get_if<Tensor<T>>(&v)) return std::move(*p);
    throw io_error("load_tensor_as: dtype mismatch in " + path.string());
}

}  // namespace agentattn
