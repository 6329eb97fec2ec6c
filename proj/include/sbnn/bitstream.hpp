#pragma once

#include <sbnn/error.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sbnn {

/// Append-only bit sink. Values are written most-significant bit first and
/// bits fill each byte from its most-significant end.
class BitWriter {
public:
    void write_bit(bool bit) {
        if (bits_ % 8 == 0) bytes_.push_back(0);
        if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80U >> (bits_ % 8));
        ++bits_;
    }

    /// Writes the low `width` bits of `value`, MSB first. `width` may be 0.
    void write(std::uint64_t value, unsigned width) {
        for (unsigned i = width; i-- > 0;) write_bit((value >> i) & 1U);
    }

    void append(std::span<const std::uint8_t> bytes, std::size_t bit_count) {
        for (std::size_t i = 0; i < bit_count; ++i) write_bit((bytes[i / 8] >> (7 - i % 8)) & 1U);
    }

    std::size_t bit_size() const noexcept { return bits_; }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t bits_ = 0;
};

class BitReader {
public:
    BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_count) : bytes_(bytes), bits_(bit_count) {
        if (bit_count > bytes.size() * 8) throw CorruptStream("bit length exceeds buffer", bytes.size() * 8);
    }

    bool read_bit() {
        if (cursor_ >= bits_) throw CorruptStream("unexpected end of bitstream", cursor_);
        const bool bit = (bytes_[cursor_ / 8] >> (7 - cursor_ % 8)) & 1U;
        ++cursor_;
        return bit;
    }

    std::uint64_t read(unsigned width) {
        if (width > 64) throw CorruptStream("field wider than 64 bits", cursor_);
        if (bits_ - cursor_ < width) throw CorruptStream("unexpected end of bitstream", cursor_);
        std::uint64_t v = 0;
        for (unsigned i = 0; i < width; ++i) v = (v << 1) | (read_bit() ? 1U : 0U);
        return v;
    }

    std::size_t position() const noexcept { return cursor_; }
    std::size_t remaining() const noexcept { return bits_ - cursor_; }
    bool at_end() const noexcept { return cursor_ == bits_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t bits_;
    std::size_t cursor_ = 0;
};

}  // namespace sbnn
