#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "occo/tensor.hpp"

namespace occo {
namespace io {

static_assert(std::endian::native == std::endian::little,
              "serialized containers assume a little-endian host");

inline void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    OCCO_CHECK(is.good(), "truncated container (u32)");
    return v;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    OCCO_CHECK(is.good(), "truncated container (u64)");
    return v;
}
inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
    uint32_t len = read_u32(is);
    OCCO_CHECK(len <= (1u << 20), "implausible string length ", len);
    std::string s(len, '\0');
    is.read(s.data(), len);
    OCCO_CHECK(is.good(), "truncated container (string)");
    return s;
}

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Block layout: count, then per tensor name, ndim, dims, raw float64 data.
inline void write_tensor_block(std::ostream& os, const NamedTensors& tensors) {
    write_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_string(os, name);
        write_u32(os, static_cast<uint32_t>(t.ndim()));
        for (int64_t d : t.shape()) write_u64(os, static_cast<uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    OCCO_CHECK(os.good(), "write failure in tensor block");
}

inline NamedTensors read_tensor_block(std::istream& is) {
    uint32_t count = read_u32(is);
    OCCO_CHECK(count <= (1u << 20), "implausible tensor count ", count);
    NamedTensors out;
    out.reserve(count);
    for (uint32_t k = 0; k < count; ++k) {
        std::string name = read_string(is);
        uint32_t ndim = read_u32(is);
        OCCO_CHECK(ndim <= 8, "implausible rank ", ndim, " for tensor ", name);
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int64_t>(read_u64(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        OCCO_CHECK(is.good(), "truncated tensor data for ", name);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

inline constexpr char kWeightsMagic[] = "OCCOWGTS";

/// Standalone weights container (e.g. an exported backbone).
inline void save_weights_file(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    OCCO_CHECK(os.good(), "cannot open ", path, " for writing");
    os.write(kWeightsMagic, 8);
    write_u32(os, 1); // version
    write_tensor_block(os, tensors);
    OCCO_CHECK(os.good(), "write failure for ", path);
}

inline NamedTensors load_weights_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    OCCO_CHECK(is.good(), "cannot open weights file ", path);
    char magic[8] = {};
    is.read(magic, 8);
    OCCO_CHECK(is.good() && std::string(magic, 8) == kWeightsMagic, path,
               " is not a weights container");
    uint32_t version = read_u32(is);
    OCCO_CHECK(version == 1, "unsupported weights container version ", version);
    return read_tensor_block(is);
}

} // namespace io
} // namespace occo
