#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mitodet/core/error.hpp"
#include "mitodet/nn/tensor.hpp"

namespace mitodet::nn {

// Little-endian binary tensor blobs used inside checkpoint files.
// Layout per tensor: u32 name_len, name bytes, 4 x i32 dims, f32 data.

inline void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_i32(std::ostream& os, int32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline int32_t read_i32(std::istream& is) {
    int32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
    const uint32_t len = read_u32(is);
    if (len > (1u << 28)) throw CheckpointError("corrupt string length in checkpoint");
    std::string s(len, '\0');
    is.read(s.data(), len);
    return s;
}

inline void write_tensor(std::ostream& os, const std::string& name,
                         const Tensor<float>& t) {
    write_string(os, name);
    write_i32(os, t.n);
    write_i32(os, t.c);
    write_i32(os, t.h);
    write_i32(os, t.w);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
}

inline Tensor<float> read_tensor(std::istream& is, std::string& name) {
    name = read_string(is);
    const int n = read_i32(is);
    const int c = read_i32(is);
    const int h = read_i32(is);
    const int w = read_i32(is);
    if (n < 0 || c < 0 || h < 0 || w < 0) {
        throw CheckpointError("corrupt tensor dims for '" + name + "'");
    }
    Tensor<float> t(n, c, h, w);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!is) throw CheckpointError("truncated tensor data for '" + name + "'");
    return t;
}

inline void write_float_vec(std::ostream& os, const std::string& name,
                            const std::vector<float>& v) {
    Tensor<float> t(static_cast<int>(v.size()), 1, 1, 1);
    t.v = v;
    write_tensor(os, name, t);
}

// Reads all tensors until EOF into a name -> tensor map.
inline std::map<std::string, Tensor<float>> read_tensor_map(std::istream& is) {
    std::map<std::string, Tensor<float>> out;
    while (is.peek() != std::char_traits<char>::eof()) {
        std::string name;
        Tensor<float> t = read_tensor(is, name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace mitodet::nn
