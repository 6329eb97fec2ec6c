#pragma once

#include <sbnn/error.hpp>

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace sbnn {

enum class Split { train, test };

/// Labelled images stored row-major, one sample of `dim` values per row,
/// pixels scaled to [-1, 1].
struct Dataset {
    std::vector<float> images;
    std::vector<std::uint8_t> labels;
    std::size_t dim = 0;
    std::size_t classes = 10;
    Split split = Split::train;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> sample(std::size_t i) const { return std::span(images).subspan(i * dim, dim); }
};

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> pixels;  // scaled to [-1, 1]
};

inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& name = "images") {
    if (bytes.size() < 16) throw DataError(name + ": truncated IDX header");
    if (detail::read_be32(bytes, 0) != kIdxImagesMagic) throw DataError(name + ": bad IDX image magic");
    IdxImages out;
    out.count = detail::read_be32(bytes, 4);
    out.rows = detail::read_be32(bytes, 8);
    out.cols = detail::read_be32(bytes, 12);
    const std::size_t need = out.count * out.rows * out.cols;
    if (bytes.size() - 16 != need)
        throw DataError(name + ": expected " + std::to_string(need) + " pixel bytes, found " +
                        std::to_string(bytes.size() - 16));
    out.pixels.resize(need);
    for (std::size_t i = 0; i < need; ++i) out.pixels[i] = static_cast<float>(bytes[16 + i]) / 127.5F - 1.0F;
    return out;
}

inline std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes, std::size_t classes = 10,
                                                  const std::string& name = "labels") {
    if (bytes.size() < 8) throw DataError(name + ": truncated IDX header");
    if (detail::read_be32(bytes, 0) != kIdxLabelsMagic) throw DataError(name + ": bad IDX label magic");
    const std::size_t count = detail::read_be32(bytes, 4);
    if (bytes.size() - 8 != count)
        throw DataError(name + ": expected " + std::to_string(count) + " labels, found " +
                        std::to_string(bytes.size() - 8));
    std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= classes)
            throw DataError(name + ": label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                            " is outside 0-" + std::to_string(classes - 1));
    return labels;
}

inline Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels, Split split) {
    const auto img = parse_idx_images(detail::slurp(images), images.filename().string());
    Dataset d;
    d.labels = parse_idx_labels(detail::slurp(labels), 10, labels.filename().string());
    if (d.labels.size() != img.count)
        throw DataError("image count " + std::to_string(img.count) + " does not match label count " +
                        std::to_string(d.labels.size()));
    d.images = img.pixels;
    d.dim = img.rows * img.cols;
    d.split = split;
    return d;
}

struct DatasetPair {
    Dataset train;
    Dataset test;
};

/// Loads the four standard MNIST IDX files from `dir`. With `canonical` set,
/// the 60000/10000 split of 28x28 images is enforced.
inline DatasetPair load_mnist(const std::filesystem::path& dir, bool canonical = true) {
    DatasetPair p{load_idx_dataset(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", Split::train),
                  load_idx_dataset(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::test)};
    if (p.train.dim != p.test.dim) throw DataError("train and test image sizes differ");
    if (canonical && (p.train.size() != 60000 || p.test.size() != 10000 || p.train.dim != 784))
        throw DataError("not the canonical MNIST split: " + std::to_string(p.train.size()) + " train, " +
                        std::to_string(p.test.size()) + " test, " + std::to_string(p.train.dim) + " pixels");
    return p;
}

/// Writes an IDX image/label file pair; used to stage datasets for the loader.
inline void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> label_values,
                      std::uint32_t rows, std::uint32_t cols) {
    auto be32 = [](std::ofstream& out, std::uint32_t v) {
        const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                    static_cast<char>(v)};
        out.write(b.data(), 4);
    };
    std::ofstream img(images, std::ios::binary);
    std::ofstream lab(labels, std::ios::binary);
    if (!img || !lab) throw DataError("cannot create IDX files");
    be32(img, kIdxImagesMagic);
    be32(img, static_cast<std::uint32_t>(label_values.size()));
    be32(img, rows);
    be32(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    be32(lab, kIdxLabelsMagic);
    be32(lab, static_cast<std::uint32_t>(label_values.size()));
    lab.write(reinterpret_cast<const char*>(label_values.data()), static_cast<std::streamsize>(label_values.size()));
}

}  // namespace sbnn
