#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ilnl/dataset.hpp"
#include "ilnl/errors.hpp"

namespace ilnl {

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw data_error("truncated IDX file while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // ubyte, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // ubyte, 1 dim

/// Load an IDX image file alone (no labels) as an unlabeled split.
inline DatasetSplit load_idx_images(const std::filesystem::path& images_path,
                                    std::size_t k = 10) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw data_error("cannot open " + images_path.string());
    if (detail::read_be_u32(img, "image magic") != kIdxImagesMagic)
        throw data_error(images_path.string() + ": bad magic number (expected 0x00000803)");
    const std::uint32_t n = detail::read_be_u32(img, "image count");
    const std::uint32_t rows = detail::read_be_u32(img, "row count");
    const std::uint32_t cols = detail::read_be_u32(img, "column count");
    const std::size_t d = std::size_t(rows) * cols;
    if (n == 0 || d == 0) throw data_error(images_path.string() + ": empty image file");
    std::vector<unsigned char> pixels(std::size_t(n) * d);
    if (!img.read(reinterpret_cast<char*>(pixels.data()),
                  static_cast<std::streamsize>(pixels.size())))
        throw data_error(images_path.string() + ": length mismatch (file shorter than header)");
    Matrix features(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            features(i, j) = static_cast<double>(pixels[i * d + j]) / 255.0;
    return DatasetSplit::unlabeled(std::move(features), k);
}

/// Load an IDX image/label pair (the MNIST binary layout: big-endian magic,
/// dimension sizes, then raw unsigned bytes). Pixels are scaled to [0,1] and
/// images flattened to d = rows*cols.
inline DatasetSplit load_idx(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path,
                             std::size_t k = 10, bool eval_only_labels = false) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw data_error("cannot open " + images_path.string());
    const std::uint32_t img_magic = detail::read_be_u32(img, "image magic");
    if (img_magic != kIdxImagesMagic)
        throw data_error(images_path.string() + ": bad magic number (expected 0x00000803)");
    const std::uint32_t n = detail::read_be_u32(img, "image count");
    const std::uint32_t rows = detail::read_be_u32(img, "row count");
    const std::uint32_t cols = detail::read_be_u32(img, "column count");
    const std::size_t d = std::size_t(rows) * cols;
    if (n == 0 || d == 0) throw data_error(images_path.string() + ": empty image file");

    std::vector<unsigned char> pixels(std::size_t(n) * d);
    if (!img.read(reinterpret_cast<char*>(pixels.data()),
                  static_cast<std::streamsize>(pixels.size())))
        throw data_error(images_path.string() + ": length mismatch (file shorter than header)");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw data_error("cannot open " + labels_path.string());
    const std::uint32_t lab_magic = detail::read_be_u32(lab, "label magic");
    if (lab_magic != kIdxLabelsMagic)
        throw data_error(labels_path.string() + ": bad magic number (expected 0x00000801)");
    const std::uint32_t n_labels = detail::read_be_u32(lab, "label count");
    if (n_labels != n)
        throw data_error("image/label count mismatch: " + std::to_string(n) + " images vs " +
                         std::to_string(n_labels) + " labels");
    std::vector<unsigned char> raw_labels(n_labels);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()),
                  static_cast<std::streamsize>(raw_labels.size())))
        throw data_error(labels_path.string() + ": length mismatch (file shorter than header)");

    Matrix features(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            features(i, j) = static_cast<double>(pixels[i * d + j]) / 255.0;
    std::vector<int> labels(raw_labels.begin(), raw_labels.end());
    return DatasetSplit::labeled(std::move(features), std::move(labels), k, eval_only_labels);
}

} // namespace ilnl
