#pragma once

#include <sbnn/error.hpp>

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace sbnn {

using Word = std::uint64_t;
inline constexpr std::size_t kWordBits = 64;

inline constexpr std::size_t words_for(std::size_t bits) noexcept {
    return (bits + kWordBits - 1) / kWordBits;
}

inline std::size_t popcount(std::span<const Word> words) noexcept {
    std::size_t total = 0;
    for (Word w : words) total += static_cast<std::size_t>(std::popcount(w));
    return total;
}

inline std::size_t product(std::span<const std::size_t> dims) noexcept {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

/// Fixed-length bit vector, LSB-first within each 64-bit word. Pad bits stay zero.
class BitVector {
public:
    BitVector() = default;
    explicit BitVector(std::size_t size) : words_(words_for(size), 0), size_(size) {}

    std::size_t size() const noexcept { return size_; }
    std::span<const Word> words() const noexcept { return words_; }

    bool get(std::size_t i) const noexcept { return (words_[i / kWordBits] >> (i % kWordBits)) & 1U; }

    void set(std::size_t i, bool value) noexcept {
        const Word mask = Word{1} << (i % kWordBits);
        if (value)
            words_[i / kWordBits] |= mask;
        else
            words_[i / kWordBits] &= ~mask;
    }

    std::size_t count() const noexcept { return popcount(words_); }

    friend bool operator==(const BitVector&, const BitVector&) = default;

private:
    std::vector<Word> words_;
    std::size_t size_ = 0;
};

/// Bit-packed 0/1 tensor. Bits are stored contiguously in row-major order over
/// `dims`, least-significant bit first within each word; bit value 1 marks a
/// one-valued (connected) weight.
class PackedBitMatrix {
public:
    PackedBitMatrix() = default;

    /// All-zero tensor of the given shape.
    explicit PackedBitMatrix(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), bits_(product(dims_)) {}

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return bits_.size(); }
    std::span<const Word> words() const noexcept { return bits_.words(); }
    std::size_t popcount_total() const noexcept { return popcount_; }

    /// Product of all dimensions except the last; 1 for a 1-D tensor.
    std::size_t rows() const noexcept {
        if (dims_.empty()) return 0;
        return product(std::span(dims_).first(dims_.size() - 1));
    }
    std::size_t cols() const noexcept { return dims_.empty() ? 0 : dims_.back(); }

    /// Number of leading-dimension slices (rows of a linear layer, output
    /// channels of a convolutional tensor) and the bit length of each.
    std::size_t slices() const noexcept { return dims_.empty() ? 0 : dims_.front(); }
    std::size_t slice_size() const noexcept {
        if (dims_.empty()) return 0;
        return product(std::span(dims_).subspan(1));
    }

    bool get(std::size_t i) const noexcept { return bits_.get(i); }
    bool get(std::size_t row, std::size_t col) const noexcept { return bits_.get(row * cols() + col); }

    void set(std::size_t i, bool value) noexcept {
        const bool old = bits_.get(i);
        if (old == value) return;
        bits_.set(i, value);
        if (value)
            ++popcount_;
        else
            --popcount_;
    }

    friend bool operator==(const PackedBitMatrix& a, const PackedBitMatrix& b) {
        return a.dims_ == b.dims_ && a.bits_ == b.bits_;
    }

private:
    std::vector<std::size_t> dims_;
    BitVector bits_;
    std::size_t popcount_ = 0;
};

inline std::string dims_to_string(std::span<const std::size_t> dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

/// Packs a dense row-major 0/1 vector into a PackedBitMatrix of shape `dims`.
inline PackedBitMatrix pack_bits(std::span<const std::uint8_t> dense, std::vector<std::size_t> dims) {
    if (product(dims) != dense.size() || dims.empty())
        throw SizeError("pack_bits: " + std::to_string(dense.size()) + " values do not fill dims " +
                        dims_to_string(dims));
    PackedBitMatrix m(std::move(dims));
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] > 1) throw DomainError("pack_bits: value at " + std::to_string(i) + " is not 0/1");
        if (dense[i]) m.set(i, true);
    }
    return m;
}

inline std::vector<std::uint8_t> unpack_bits(const PackedBitMatrix& m) {
    std::vector<std::uint8_t> out(m.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.get(i) ? 1 : 0;
    return out;
}

}  // namespace sbnn
