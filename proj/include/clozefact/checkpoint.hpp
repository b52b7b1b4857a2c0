#pragma once

// Encoder checkpoint file, all integers and floats little-endian:
//
//   magic        8 bytes  "CLZFCKPT"
//   version      u32      1
//   config       u64 x 8  vocab_size, max_len, d_model, n_heads, n_layers,
//                         d_ff, n_classes, tensor_count
//                f64 x 2  dropout_rate, init_std
//   tensors      per tensor in declaration order:
//                u64 rows, u64 cols, f64[rows*cols] row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "clozefact/encoder.hpp"
#include "clozefact/error.hpp"

namespace clozefact {

inline constexpr std::array<char, 8> kCheckpointMagic = {'C', 'L', 'Z', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) {
        b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(b.data(), 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) {
        b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(b.data(), 4);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    if (!in) {
        throw DataError("checkpoint: unexpected end of file");
    }
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | b[static_cast<std::size_t>(i)];
    }
    return v;
}

inline std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) {
        throw DataError("checkpoint: unexpected end of file");
    }
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | b[static_cast<std::size_t>(i)];
    }
    return v;
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

} // namespace detail

inline void write_checkpoint(std::ostream& out, const EncoderParams& p) {
    const auto& c = p.config;
    const auto tensors = p.tensors();
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u32(out, kCheckpointVersion);
    for (std::size_t v : {c.vocab_size, c.max_len, c.d_model, c.n_heads, c.n_layers, c.d_ff,
                          c.n_classes, tensors.size()}) {
        detail::put_u64(out, v);
    }
    detail::put_f64(out, c.dropout_rate);
    detail::put_f64(out, c.init_std);
    for (const Matrix* m : tensors) {
        detail::put_u64(out, m->rows());
        detail::put_u64(out, m->cols());
        for (double x : m->values()) {
            detail::put_f64(out, x);
        }
    }
}

inline EncoderParams read_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kCheckpointMagic) {
        throw DataError("checkpoint: bad magic");
    }
    if (const auto v = detail::get_u32(in); v != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(v));
    }
    EncoderConfig c;
    c.vocab_size = detail::get_u64(in);
    c.max_len = detail::get_u64(in);
    c.d_model = detail::get_u64(in);
    c.n_heads = detail::get_u64(in);
    c.n_layers = detail::get_u64(in);
    c.d_ff = detail::get_u64(in);
    c.n_classes = detail::get_u64(in);
    const std::uint64_t count = detail::get_u64(in);
    c.dropout_rate = detail::get_f64(in);
    c.init_std = detail::get_f64(in);
    if (c.vocab_size > (1u << 22) || c.max_len > (1u << 16) || c.d_model > (1u << 14) ||
        c.n_heads > c.d_model || c.n_layers > 256 || c.d_ff > (1u << 16) || c.n_classes > 1024) {
        throw DataError("checkpoint: implausible model dimensions");
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("checkpoint: invalid config: ") + e.what());
    }
    EncoderParams p = zero_params(c);
    auto tensors = p.tensors();
    if (count != tensors.size()) {
        throw DataError("checkpoint: tensor count mismatch");
    }
    for (Matrix* m : tensors) {
        const auto rows = detail::get_u64(in);
        const auto cols = detail::get_u64(in);
        if (rows != m->rows() || cols != m->cols()) {
            throw DataError("checkpoint: tensor shape mismatch");
        }
        for (double& x : m->values()) {
            x = detail::get_f64(in);
        }
    }
    return p;
}

inline void save_checkpoint(const EncoderParams& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write checkpoint '" + path + "'");
    }
    write_checkpoint(out, p);
}

inline EncoderParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint '" + path + "'");
    }
    try {
        return read_checkpoint(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace clozefact
