#pragma once

#include <sbnn/bits.hpp>
#include <sbnn/bitstream.hpp>
#include <sbnn/error.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sbnn {

/// Container codec ids. NE stores one raw bit per weight.
enum class Codec : std::uint8_t { NE = 0, IE = 1, RLE = 2, HE = 3 };

inline std::string_view codec_name(Codec c) {
    switch (c) {
        case Codec::NE: return "NE";
        case Codec::IE: return "IE";
        case Codec::RLE: return "RLE";
        case Codec::HE: return "HE";
    }
    return "?";
}

inline std::optional<Codec> parse_codec(std::string_view s) {
    for (Codec c : {Codec::NE, Codec::IE, Codec::RLE, Codec::HE}) {
        std::string lower(codec_name(c));
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (s == codec_name(c) || s == lower) return c;
    }
    return std::nullopt;
}

struct HuffmanCode {
    std::uint32_t symbol;
    std::uint8_t length;
    std::uint64_t code;

    friend bool operator==(const HuffmanCode&, const HuffmanCode&) = default;
};

/// Canonical Huffman code, entries ordered by (length, symbol).
struct HuffmanTable {
    std::vector<HuffmanCode> codes;

    std::optional<std::uint8_t> length_of(std::uint32_t symbol) const {
        for (const auto& c : codes)
            if (c.symbol == symbol) return c.length;
        return std::nullopt;
    }

    friend bool operator==(const HuffmanTable&, const HuffmanTable&) = default;
};

struct EncodedLayer {
    Codec codec = Codec::NE;
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> payload;
    std::size_t payload_bits = 0;
    std::optional<std::uint32_t> rle_c;
    std::optional<HuffmanTable> huffman_table;
};

namespace detail {

inline unsigned bit_length(std::uint64_t v) noexcept { return static_cast<unsigned>(std::bit_width(v)); }

inline unsigned ceil_log2(std::uint64_t v) noexcept { return v <= 1 ? 0 : bit_length(v - 1); }

/// Calls f(i) for every set bit i in [begin, end) of the flat bit storage.
template <typename F>
void for_each_one(const PackedBitMatrix& m, std::size_t begin, std::size_t end, F&& f) {
    const auto words = m.words();
    std::size_t w = begin / kWordBits;
    while (w * kWordBits < end) {
        Word bits = words[w];
        const std::size_t base = w * kWordBits;
        if (base < begin) bits &= ~Word{0} << (begin - base);
        if (end - base < kWordBits) bits &= (Word{1} << (end - base)) - 1;
        while (bits) {
            f(base + static_cast<std::size_t>(std::countr_zero(bits)));
            bits &= bits - 1;
        }
        ++w;
    }
}

/// Zero-run lengths of every leading-dimension slice: one run before each
/// one-valued bit plus the trailing run, so a slice with k ones yields k+1 runs.
struct Runs {
    std::vector<std::uint64_t> lengths;
    std::vector<std::size_t> per_slice;
};

inline Runs extract_runs(const PackedBitMatrix& m) {
    Runs runs;
    const std::size_t slices = m.slices();
    const std::size_t s = m.slice_size();
    runs.per_slice.reserve(slices);
    runs.lengths.reserve(m.popcount_total() + slices);
    for (std::size_t i = 0; i < slices; ++i) {
        const std::size_t begin = i * s;
        std::size_t last = begin;
        std::size_t count = 0;
        for_each_one(m, begin, begin + s, [&](std::size_t pos) {
            runs.lengths.push_back(pos - last);
            last = pos + 1;
            ++count;
        });
        runs.lengths.push_back(begin + s - last);
        runs.per_slice.push_back(count + 1);
    }
    return runs;
}

inline void require_matrix(const PackedBitMatrix& m, std::string_view who) {
    if (m.dims().size() < 2)
        throw SizeError(std::string(who) + ": needs a tensor with at least 2 dims, got " + dims_to_string(m.dims()));
}

inline void require_codec(const EncodedLayer& e, Codec c) {
    if (e.codec != c)
        throw DomainError("decoder for " + std::string(codec_name(c)) + " given a " +
                          std::string(codec_name(e.codec)) + " layer");
}

inline void require_consumed(const BitReader& r) {
    if (!r.at_end()) throw CorruptStream("trailing bits after encoded layer", r.position());
}

/// Chunked count: ceil(bits/c) groups of c bits, MSB group first, each followed
/// by a flag bit (0 = more groups follow, 1 = terminator).
inline std::size_t chunk_groups(std::uint64_t v, unsigned c) noexcept {
    const unsigned bits = std::max(1U, bit_length(v));
    return (bits + c - 1) / c;
}

inline std::size_t chunk_cost(std::uint64_t v, unsigned c) noexcept { return chunk_groups(v, c) * (c + 1); }

inline void write_chunked(BitWriter& w, std::uint64_t v, unsigned c) {
    const std::size_t groups = chunk_groups(v, c);
    const std::uint64_t mask = c >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << c) - 1;
    for (std::size_t g = groups; g-- > 0;) {
        w.write((v >> (g * c)) & mask, c);
        w.write_bit(g == 0);
    }
}

inline std::uint64_t read_chunked(BitReader& r, unsigned c) {
    const std::size_t start = r.position();
    const std::size_t max_groups = (64 + c - 1) / c;
    std::uint64_t v = 0;
    for (std::size_t g = 0;; ++g) {
        if (g == max_groups) throw CorruptStream("run-length count overflows 64 bits", start);
        v = (c >= 64 ? 0 : v << c) | r.read(c);
        if (r.read_bit()) return v;
    }
}

/// Rebuilds slice `i` from its zero runs. `next_run` yields successive runs.
template <typename NextRun>
void place_runs(PackedBitMatrix& m, std::size_t slice, NextRun&& next_run, BitReader& r,
                std::optional<std::size_t> run_count) {
    const std::size_t s = m.slice_size();
    const std::size_t base = slice * s;
    std::size_t pos = 0;
    std::size_t read = 0;
    for (;;) {
        const std::size_t at = r.position();
        const std::uint64_t run = next_run();
        ++read;
        if (run > s - pos) throw CorruptStream("zero run overruns slice " + std::to_string(slice), at);
        pos += static_cast<std::size_t>(run);
        const bool tail = run_count ? read == *run_count : pos == s;
        if (tail) {
            if (pos != s) throw CorruptStream("slice " + std::to_string(slice) + " ends before its width", at);
            return;
        }
        if (pos == s) throw CorruptStream("one-valued bit past the end of slice " + std::to_string(slice), at);
        m.set(base + pos, true);
        ++pos;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// NE: raw bits, row-major.

inline EncodedLayer ne_encode(const PackedBitMatrix& m) {
    BitWriter w;
    for (std::size_t i = 0; i < m.size(); ++i) w.write_bit(m.get(i));
    EncodedLayer e;
    e.codec = Codec::NE;
    e.dims = m.dims();
    e.payload_bits = w.bit_size();
    e.payload = std::move(w).take();
    return e;
}

inline PackedBitMatrix ne_decode(const EncodedLayer& e) {
    detail::require_codec(e, Codec::NE);
    PackedBitMatrix m(e.dims);
    BitReader r(e.payload, e.payload_bits);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (r.read_bit()) m.set(i, true);
    detail::require_consumed(r);
    return m;
}

// ---------------------------------------------------------------------------
// IE: per row, a (n_bits+1)-bit count of ones then n_bits-bit column indexes.

/// Index width for a row of `cols` columns; a single column still gets 1 bit.
inline unsigned ie_index_bits(std::size_t cols) noexcept { return std::max(1U, detail::ceil_log2(cols)); }

inline EncodedLayer ie_encode(const PackedBitMatrix& m) {
    detail::require_matrix(m, "ie_encode");
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    const unsigned nbits = ie_index_bits(cols);
    BitWriter w;
    std::vector<std::uint64_t> idx;
    for (std::size_t r = 0; r < rows; ++r) {
        idx.clear();
        detail::for_each_one(m, r * cols, (r + 1) * cols, [&](std::size_t pos) { idx.push_back(pos - r * cols); });
        w.write(idx.size(), nbits + 1);
        for (auto i : idx) w.write(i, nbits);
    }
    EncodedLayer e;
    e.codec = Codec::IE;
    e.dims = m.dims();
    e.payload_bits = w.bit_size();
    e.payload = std::move(w).take();
    return e;
}

inline PackedBitMatrix ie_decode(const EncodedLayer& e) {
    detail::require_codec(e, Codec::IE);
    if (e.dims.size() < 2) throw CorruptStream("IE layer needs at least 2 dims", 0);
    PackedBitMatrix m(e.dims);
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    const unsigned nbits = ie_index_bits(cols);
    BitReader r(e.payload, e.payload_bits);
    for (std::size_t row = 0; row < rows; ++row) {
        const std::size_t at = r.position();
        const std::uint64_t count = r.read(nbits + 1);
        if (count > cols) throw CorruptStream("row " + std::to_string(row) + " claims more ones than columns", at);
        for (std::uint64_t k = 0; k < count; ++k) {
            const std::size_t idx_at = r.position();
            const std::uint64_t col = r.read(nbits);
            if (col >= cols) throw CorruptStream("column index out of range in row " + std::to_string(row), idx_at);
            const std::size_t flat = row * cols + static_cast<std::size_t>(col);
            if (m.get(flat)) throw CorruptStream("duplicate column index in row " + std::to_string(row), idx_at);
            m.set(flat, true);
        }
    }
    detail::require_consumed(r);
    return m;
}

// ---------------------------------------------------------------------------
// RLE: per slice, a 32-bit run count followed by chunk-encoded zero runs.

inline std::size_t rle_payload_bits(const detail::Runs& runs, unsigned c) {
    std::size_t bits = 32 * runs.per_slice.size();
    for (auto v : runs.lengths) bits += detail::chunk_cost(v, c);
    return bits;
}

/// Candidate chunk widths {1, ..., ceil(log2(largest run))}, at least {1}.
inline unsigned rle_max_c(const detail::Runs& runs) {
    std::uint64_t largest = 0;
    for (auto v : runs.lengths) largest = std::max(largest, v);
    return std::max(1U, detail::ceil_log2(largest));
}

inline unsigned choose_rle_c(const PackedBitMatrix& m) {
    detail::require_matrix(m, "choose_rle_c");
    const auto runs = detail::extract_runs(m);
    unsigned best = 1;
    std::size_t best_bits = rle_payload_bits(runs, 1);
    for (unsigned c = 2; c <= rle_max_c(runs); ++c) {
        const std::size_t bits = rle_payload_bits(runs, c);
        if (bits < best_bits) {
            best = c;
            best_bits = bits;
        }
    }
    return best;
}

inline EncodedLayer rle_encode(const PackedBitMatrix& m, unsigned c) {
    detail::require_matrix(m, "rle_encode");
    if (c < 1 || c > 0xFFFF) throw DomainError("rle_encode: chunk width must be in [1, 65535]");
    const auto runs = detail::extract_runs(m);
    BitWriter w;
    std::size_t next = 0;
    for (std::size_t count : runs.per_slice) {
        if (count > 0xFFFFFFFFULL) throw SizeError("rle_encode: slice has more than 2^32-1 runs");
        w.write(count, 32);
        for (std::size_t k = 0; k < count; ++k) detail::write_chunked(w, runs.lengths[next++], c);
    }
    EncodedLayer e;
    e.codec = Codec::RLE;
    e.dims = m.dims();
    e.payload_bits = w.bit_size();
    e.payload = std::move(w).take();
    e.rle_c = c;
    return e;
}

inline EncodedLayer rle_encode(const PackedBitMatrix& m) { return rle_encode(m, choose_rle_c(m)); }

inline PackedBitMatrix rle_decode(const EncodedLayer& e) {
    detail::require_codec(e, Codec::RLE);
    if (e.dims.size() < 2) throw CorruptStream("RLE layer needs at least 2 dims", 0);
    if (!e.rle_c || *e.rle_c < 1) throw CorruptStream("RLE layer without a valid chunk width", 0);
    const unsigned c = *e.rle_c;
    PackedBitMatrix m(e.dims);
    BitReader r(e.payload, e.payload_bits);
    for (std::size_t slice = 0; slice < m.slices(); ++slice) {
        const std::size_t at = r.position();
        const std::uint64_t count = r.read(32);
        if (count == 0 || count > m.slice_size() + 1)
            throw CorruptStream("implausible run count for slice " + std::to_string(slice), at);
        detail::place_runs(m, slice, [&] { return detail::read_chunked(r, c); }, r, static_cast<std::size_t>(count));
    }
    detail::require_consumed(r);
    return m;
}

// ---------------------------------------------------------------------------
// HE: canonical Huffman code over the zero-run alphabet.
// Payload: 16-bit table size, (32-bit symbol, 8-bit length) pairs, coded runs.

inline constexpr unsigned kMaxHuffmanLength = 63;

/// Code lengths for the given symbol frequencies (std::map keeps ties deterministic).
inline std::map<std::uint32_t, std::uint8_t> huffman_lengths(const std::map<std::uint32_t, std::uint64_t>& freq) {
    std::map<std::uint32_t, std::uint8_t> lengths;
    if (freq.empty()) return lengths;
    if (freq.size() == 1) {
        lengths[freq.begin()->first] = 1;
        return lengths;
    }
    // Nodes: leaves first, then internal nodes; parent links give depths.
    struct Node {
        std::uint64_t weight;
        std::size_t order;
    };
    auto cmp = [](const Node& a, const Node& b) {
        return a.weight != b.weight ? a.weight > b.weight : a.order > b.order;
    };
    std::priority_queue<Node, std::vector<Node>, decltype(cmp)> heap(cmp);
    std::vector<std::uint32_t> symbols;
    std::vector<std::size_t> parent;
    for (const auto& [sym, f] : freq) {
        heap.push({f, symbols.size()});
        symbols.push_back(sym);
        parent.push_back(0);
    }
    while (heap.size() > 1) {
        const Node a = heap.top();
        heap.pop();
        const Node b = heap.top();
        heap.pop();
        const std::size_t id = parent.size();
        parent.push_back(0);
        parent[a.order] = id;
        parent[b.order] = id;
        heap.push({a.weight + b.weight, id});
    }
    const std::size_t root = parent.size() - 1;
    std::vector<std::uint8_t> depth(parent.size(), 0);
    for (std::size_t n = root; n-- > 0;) {
        const unsigned d = depth[parent[n]] + 1U;
        if (d > kMaxHuffmanLength) throw SizeError("huffman code longer than 63 bits");
        depth[n] = static_cast<std::uint8_t>(d);
    }
    for (std::size_t i = 0; i < symbols.size(); ++i) lengths[symbols[i]] = depth[i];
    return lengths;
}

/// Assigns canonical codes; rejects length sets that violate the Kraft inequality.
inline HuffmanTable canonical_table(std::vector<std::pair<std::uint32_t, std::uint8_t>> entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    HuffmanTable table;
    std::uint64_t code = 0;
    unsigned prev_len = 0;
    unsigned __int128 kraft = 0;
    for (const auto& [sym, len] : entries) {
        if (len < 1 || len > kMaxHuffmanLength) throw DomainError("huffman code length out of range");
        kraft += static_cast<unsigned __int128>(1) << (kMaxHuffmanLength - len);
        if (kraft > (static_cast<unsigned __int128>(1) << kMaxHuffmanLength))
            throw DomainError("huffman code lengths violate the Kraft inequality");
        if (prev_len != 0) code = (code + 1) << (len - prev_len);
        prev_len = len;
        table.codes.push_back({sym, len, code});
    }
    std::vector<std::uint32_t> syms;
    syms.reserve(table.codes.size());
    for (const auto& c : table.codes) syms.push_back(c.symbol);
    std::sort(syms.begin(), syms.end());
    if (std::adjacent_find(syms.begin(), syms.end()) != syms.end()) throw DomainError("duplicate huffman symbol");
    return table;
}

namespace detail {

/// Canonical decoder state: codes of each length are consecutive integers.
class CanonicalDecoder {
public:
    explicit CanonicalDecoder(const HuffmanTable& table) {
        first_.assign(kMaxHuffmanLength + 2, 0);
        count_.assign(kMaxHuffmanLength + 2, 0);
        offset_.assign(kMaxHuffmanLength + 2, 0);
        for (std::size_t i = 0; i < table.codes.size(); ++i) {
            const auto& c = table.codes[i];
            if (count_[c.length] == 0) {
                first_[c.length] = c.code;
                offset_[c.length] = i;
            }
            ++count_[c.length];
            symbols_.push_back(c.symbol);
        }
    }

    std::uint32_t decode(BitReader& r) const {
        const std::size_t start = r.position();
        if (symbols_.empty()) throw CorruptStream("coded run with an empty huffman table", start);
        std::uint64_t code = 0;
        for (unsigned len = 1; len <= kMaxHuffmanLength; ++len) {
            code = (code << 1) | (r.read_bit() ? 1U : 0U);
            if (count_[len] && code >= first_[len] && code - first_[len] < count_[len])
                return symbols_[offset_[len] + static_cast<std::size_t>(code - first_[len])];
        }
        throw CorruptStream("invalid huffman code", start);
    }

private:
    std::vector<std::uint64_t> first_;
    std::vector<std::uint64_t> count_;
    std::vector<std::size_t> offset_;
    std::vector<std::uint32_t> symbols_;
};

}  // namespace detail

inline EncodedLayer huffman_encode(const PackedBitMatrix& m) {
    detail::require_matrix(m, "huffman_encode");
    const auto runs = detail::extract_runs(m);
    std::map<std::uint32_t, std::uint64_t> freq;
    for (auto v : runs.lengths) {
        if (v > 0xFFFFFFFFULL) throw SizeError("huffman_encode: run length exceeds 32-bit symbol");
        ++freq[static_cast<std::uint32_t>(v)];
    }
    if (freq.size() > 0xFFFF) throw SizeError("huffman_encode: more than 65535 distinct run lengths");
    const auto lengths = huffman_lengths(freq);
    HuffmanTable table = canonical_table({lengths.begin(), lengths.end()});

    std::unordered_map<std::uint32_t, const HuffmanCode*> lookup;
    for (const auto& c : table.codes) lookup[c.symbol] = &c;

    BitWriter w;
    w.write(table.codes.size(), 16);
    for (const auto& c : table.codes) {
        w.write(c.symbol, 32);
        w.write(c.length, 8);
    }
    for (auto v : runs.lengths) {
        const auto* c = lookup.at(static_cast<std::uint32_t>(v));
        w.write(c->code, c->length);
    }
    EncodedLayer e;
    e.codec = Codec::HE;
    e.dims = m.dims();
    e.payload_bits = w.bit_size();
    e.payload = std::move(w).take();
    e.huffman_table = std::move(table);
    return e;
}

/// Reads the code table at the head of an HE payload.
inline HuffmanTable read_huffman_table(BitReader& r) {
    const std::size_t n = r.read(16);
    std::vector<std::pair<std::uint32_t, std::uint8_t>> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto sym = static_cast<std::uint32_t>(r.read(32));
        const auto len = static_cast<std::uint8_t>(r.read(8));
        entries.emplace_back(sym, len);
    }
    try {
        return canonical_table(std::move(entries));
    } catch (const DomainError& err) {
        throw CorruptStream(std::string("corrupt huffman table: ") + err.what(), r.position());
    }
}

inline PackedBitMatrix huffman_decode(const EncodedLayer& e) {
    detail::require_codec(e, Codec::HE);
    if (e.dims.size() < 2) throw CorruptStream("HE layer needs at least 2 dims", 0);
    PackedBitMatrix m(e.dims);
    BitReader r(e.payload, e.payload_bits);
    const HuffmanTable table = read_huffman_table(r);
    const detail::CanonicalDecoder decoder(table);
    for (std::size_t slice = 0; slice < m.slices(); ++slice)
        detail::place_runs(m, slice, [&] { return std::uint64_t{decoder.decode(r)}; }, r, std::nullopt);
    detail::require_consumed(r);
    return m;
}

// ---------------------------------------------------------------------------

inline EncodedLayer encode(const PackedBitMatrix& m, Codec codec) {
    switch (codec) {
        case Codec::NE: return ne_encode(m);
        case Codec::IE: return ie_encode(m);
        case Codec::RLE: return rle_encode(m);
        case Codec::HE: return huffman_encode(m);
    }
    throw DomainError("unknown codec");
}

inline PackedBitMatrix decode(const EncodedLayer& e) {
    switch (e.codec) {
        case Codec::NE: return ne_decode(e);
        case Codec::IE: return ie_decode(e);
        case Codec::RLE: return rle_decode(e);
        case Codec::HE: return huffman_decode(e);
    }
    throw CorruptStream("unknown codec id", 0);
}

/// Stored size of one encoded layer: payload, 16 bits per dimension, 32 bits
/// each for alpha' and beta', plus the 16-bit chunk width for RLE. Container
/// framing (dimension-count byte, payload length prefix) is not counted.
inline std::size_t encoded_size_bits(const EncodedLayer& e) {
    std::size_t bits = e.payload_bits + 16 * e.dims.size() + 2 * 32;
    if (e.codec == Codec::RLE) bits += 16;
    return bits;
}

}  // namespace sbnn
