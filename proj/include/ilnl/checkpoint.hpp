#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "ilnl/errors.hpp"
#include "ilnl/model.hpp"

namespace ilnl {

// Checkpoint layout: magic "ILNL", u32 version, u32 K, u32 layer count,
// u32 per layer dim, then per layer the weight matrix (row-major) followed by
// the bias vector, all as little-endian 64-bit floats.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw data_error("truncated checkpoint while reading " + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& in, const std::string& what) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw data_error("truncated checkpoint while reading " + what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

inline void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint " + path.string());
    out.write("ILNL", 4);
    detail::write_u32_le(out, kCheckpointVersion);
    detail::write_u32_le(out, static_cast<std::uint32_t>(model.num_classes()));
    const auto& dims = model.layer_dims();
    detail::write_u32_le(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) detail::write_u32_le(out, static_cast<std::uint32_t>(d));
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        for (double v : model.weights()[l].data()) detail::write_f64_le(out, v);
        for (double v : model.biases()[l]) detail::write_f64_le(out, v);
    }
    if (!out) throw data_error("write failed for checkpoint " + path.string());
}

inline ClassifierModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "ILNL")
        throw data_error(path.string() + ": bad checkpoint magic");
    const std::uint32_t version = detail::read_u32_le(in, "version");
    if (version != kCheckpointVersion)
        throw data_error(path.string() + ": unsupported checkpoint version " +
                         std::to_string(version));
    const std::uint32_t k = detail::read_u32_le(in, "K");
    const std::uint32_t n_dims = detail::read_u32_le(in, "layer count");
    if (n_dims < 2) throw data_error(path.string() + ": layer_dims too short");
    std::vector<std::size_t> dims(n_dims);
    for (auto& d : dims) d = detail::read_u32_le(in, "layer dim");
    if (dims.back() != k) throw data_error(path.string() + ": K does not match layer_dims");

    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l], dims[l + 1]);
        for (auto& v : w.data()) v = detail::read_f64_le(in, "weight");
        std::vector<double> b(dims[l + 1]);
        for (auto& v : b) v = detail::read_f64_le(in, "bias");
        weights.push_back(std::move(w));
        biases.push_back(std::move(b));
    }
    char extra;
    if (in.read(&extra, 1)) throw data_error(path.string() + ": trailing bytes after parameters");
    return ClassifierModel::from_parts(std::move(dims), std::move(weights), std::move(biases));
}

} // namespace ilnl
