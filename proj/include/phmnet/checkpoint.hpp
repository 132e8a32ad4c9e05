#pragma once

// Versioned named-tensor container. Layout (little endian):
//   magic "PHMC" | u32 version | u64 entry count | entries...
// entry: u32 name length | name bytes | u32 ndim | u64 dims[] | f64 data[]
// Shapes are checked on load when the caller supplies an expected registry.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "phmnet/tensor.hpp"

namespace phm {

inline constexpr char kContainerMagic[4] = {'P', 'H', 'M', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {
template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("container: unexpected end of file");
    return v;
}
}  // namespace detail

inline void save_container(const std::string& path,
                           const std::vector<std::pair<std::string, const Tensor*>>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("container: cannot open for write: " + path);
    os.write(kContainerMagic, 4);
    detail::write_pod<std::uint32_t>(os, kContainerVersion);
    detail::write_pod<std::uint64_t>(os, entries.size());
    for (const auto& [name, t] : entries) {
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t->ndim()));
        for (auto d : t->shape) detail::write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!os) throw DataError("container: write failed: " + path);
}

inline std::map<std::string, Tensor> load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("container: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kContainerMagic, 4) != 0)
        throw DataError("container: bad magic in " + path);
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != kContainerVersion)
        throw DataError("container: unsupported version " + std::to_string(version));
    const auto count = detail::read_pod<std::uint64_t>(is);
    std::map<std::string, Tensor> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto nlen = detail::read_pod<std::uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const auto ndim = detail::read_pod<std::uint32_t>(is);
        Shape shape(ndim);
        for (auto& d : shape) d = detail::read_pod<std::uint64_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw DataError("container: truncated tensor data in " + path);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace phm
