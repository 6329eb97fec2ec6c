#pragma once

#include <sbnn/codecs.hpp>
#include <sbnn/error.hpp>
#include <sbnn/model.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace sbnn {

// SBNN container layout (all integers little-endian):
//
//   "SBNN" | u8 version | u8 codec id | u16 layer count
//   per layer:
//     u8 flags (bit 0: output layer)
//     u8 D | D x u16 dims | f32 alpha' | f32 beta'
//     hidden: out x f32 threshold | ceil(out/8) bytes comparator bits (1 = LE, LSB first)
//     output: out x f32 scale | out x f32 shift
//     RLE only: u16 chunk width c
//     u32 payload bit length | payload bytes
//   trailer: f32 target EC | f32 gamma | u32 epochs | u64 seed
//
// Constant-output neurons are written as GE against -inf (always +1) or +inf
// (always -1).

inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::size_t kMaxDimension = 0xFFFF;

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    std::vector<std::uint8_t> take() && { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const noexcept { return pos_ == in_.size(); }
    std::size_t position_bits() const noexcept { return pos_ * 8; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw CorruptStream("truncated SBNN container", pos_ * 8);
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Encodes every layer's weights with `codec`.
inline std::vector<EncodedLayer> encode_model(const SbnnModel& model, Codec codec) {
    std::vector<EncodedLayer> out;
    out.reserve(model.layers().size());
    for (const auto& l : model.layers()) out.push_back(encode(l.weights(), codec));
    return out;
}

inline std::vector<std::uint8_t> write_container(const SbnnModel& model, Codec codec) {
    detail::ByteWriter w;
    for (char ch : {'S', 'B', 'N', 'N'}) w.u8(static_cast<std::uint8_t>(ch));
    w.u8(kContainerVersion);
    w.u8(static_cast<std::uint8_t>(codec));
    if (model.layers().size() > 0xFFFF) throw SizeError("too many layers for the SBNN container");
    w.u16(static_cast<std::uint16_t>(model.layers().size()));

    for (const auto& layer : model.layers()) {
        const auto& dims = layer.weights().dims();
        w.u8(layer.is_output() ? 1 : 0);
        w.u8(static_cast<std::uint8_t>(dims.size()));
        for (auto d : dims) {
            if (d > kMaxDimension)
                throw SizeError("dimension " + std::to_string(d) + " does not fit the 16-bit container field");
            w.u16(static_cast<std::uint16_t>(d));
        }
        w.f32(layer.domain().alpha());
        w.f32(layer.domain().beta());
        if (layer.is_output()) {
            for (float s : layer.out_scale()) w.f32(s);
            for (float s : layer.out_shift()) w.f32(s);
        } else {
            const auto& cmp = layer.comparators();
            for (std::size_t i = 0; i < cmp.size(); ++i) {
                switch (cmp[i]) {
                    case Comparator::AlwaysPositive: w.f32(-std::numeric_limits<float>::infinity()); break;
                    case Comparator::AlwaysNegative: w.f32(std::numeric_limits<float>::infinity()); break;
                    default: w.f32(layer.thresholds()[i]);
                }
            }
            std::vector<std::uint8_t> bits((cmp.size() + 7) / 8, 0);
            for (std::size_t i = 0; i < cmp.size(); ++i)
                if (cmp[i] == Comparator::LE) bits[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
            w.bytes(bits);
        }
        const EncodedLayer e = encode(layer.weights(), codec);
        if (codec == Codec::RLE) w.u16(static_cast<std::uint16_t>(*e.rle_c));
        if (e.payload_bits > 0xFFFFFFFFULL) throw SizeError("layer payload exceeds 2^32-1 bits");
        w.u32(static_cast<std::uint32_t>(e.payload_bits));
        w.bytes(e.payload);
    }
    const auto& meta = model.metadata();
    w.f32(meta.target_ec);
    w.f32(meta.gamma);
    w.u32(meta.epochs);
    w.u64(meta.seed);
    return std::move(w).take();
}

struct ContainerContents {
    SbnnModel model;
    Codec codec;
    std::vector<EncodedLayer> encoded;
};

inline ContainerContents read_container(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    const auto magic = r.bytes(4);
    if (!(magic[0] == 'S' && magic[1] == 'B' && magic[2] == 'N' && magic[3] == 'N'))
        throw CorruptStream("not an SBNN container (bad magic)", 0);
    const std::uint8_t version = r.u8();
    if (version != kContainerVersion)
        throw CorruptStream("unsupported SBNN container version " + std::to_string(version), 32);
    const std::uint8_t codec_id = r.u8();
    if (codec_id > 3) throw CorruptStream("unknown codec id " + std::to_string(codec_id), 40);
    const auto codec = static_cast<Codec>(codec_id);
    const std::size_t n_layers = r.u16();

    std::vector<SbnnLayer> layers;
    std::vector<EncodedLayer> encoded;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::uint8_t flags = r.u8();
        const bool is_output = flags & 1U;
        const std::size_t d = r.u8();
        if (d != 2) throw CorruptStream("layer " + std::to_string(l) + " is not 2-D", r.position_bits());
        EncodedLayer e;
        e.codec = codec;
        for (std::size_t i = 0; i < d; ++i) e.dims.push_back(r.u16());
        const float alpha = r.f32();
        const float beta = r.f32();
        if (!(beta != 0.0F) || !std::isfinite(alpha) || !std::isfinite(beta))
            throw CorruptStream("invalid domain parameters in layer " + std::to_string(l), r.position_bits());
        const auto domain = AffineBinaryDomain::zero_one(alpha, beta);
        const std::size_t out = e.dims[0];

        std::vector<float> a(out), b(out);
        std::vector<Comparator> cmp;
        if (is_output) {
            for (auto& v : a) v = r.f32();
            for (auto& v : b) v = r.f32();
        } else {
            for (auto& v : a) v = r.f32();
            const auto bits = r.bytes((out + 7) / 8);
            cmp.resize(out);
            for (std::size_t i = 0; i < out; ++i) {
                const bool le = (bits[i / 8] >> (i % 8)) & 1U;
                if (std::isinf(a[i]) && !le)
                    cmp[i] = a[i] < 0 ? Comparator::AlwaysPositive : Comparator::AlwaysNegative;
                else if (std::isnan(a[i]) || std::isinf(a[i]))
                    throw CorruptStream("invalid threshold in layer " + std::to_string(l), r.position_bits());
                else
                    cmp[i] = le ? Comparator::LE : Comparator::GE;
            }
        }
        if (codec == Codec::RLE) e.rle_c = r.u16();
        e.payload_bits = r.u32();
        const auto payload = r.bytes((e.payload_bits + 7) / 8);
        e.payload.assign(payload.begin(), payload.end());
        if (codec == Codec::HE) {
            BitReader hr(e.payload, e.payload_bits);
            e.huffman_table = read_huffman_table(hr);
        }
        PackedBitMatrix weights = decode(e);
        if (is_output)
            layers.push_back(SbnnLayer::output(std::move(weights), domain, std::move(a), std::move(b)));
        else
            layers.emplace_back(std::move(weights), domain, std::move(a), std::move(cmp));
        encoded.push_back(std::move(e));
    }
    ModelMetadata meta;
    meta.target_ec = r.f32();
    meta.gamma = r.f32();
    meta.epochs = r.u32();
    meta.seed = r.u64();
    if (!r.at_end()) throw CorruptStream("trailing bytes after SBNN container", r.position_bits());
    try {
        return {SbnnModel(std::move(layers), meta), codec, std::move(encoded)};
    } catch (const SizeError& err) {
        throw CorruptStream(std::string("inconsistent layer chain: ") + err.what(), r.position_bits());
    }
}

inline void save_container(const std::filesystem::path& path, const SbnnModel& model, Codec codec) {
    const auto bytes = write_container(model, codec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed for " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline ContainerContents load_container(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return read_container(bytes);
}

}  // namespace sbnn
