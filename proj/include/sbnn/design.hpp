#pragma once

#include <sbnn/bits.hpp>
#include <sbnn/codecs.hpp>
#include <sbnn/error.hpp>
#include <sbnn/model.hpp>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sbnn {

struct TopologyLayer {
    std::vector<std::size_t> dims;
    bool compressible = true;
    std::size_t bn_scales = 0;  // full-precision batchnorm scalars attached to this layer

    std::size_t weights() const noexcept { return product(dims); }
};

struct TopologySpec {
    std::string name;
    std::vector<TopologyLayer> layers;

    void validate() const {
        if (layers.empty()) throw SizeError("topology has no layers");
        for (const auto& l : layers) {
            if (l.dims.empty() || l.weights() == 0) throw SizeError("topology layer with zero weights");
            for (auto d : l.dims)
                if (d > 0xFFFF) throw SizeError("topology dimension " + std::to_string(d) + " exceeds 16 bits");
        }
    }

    std::size_t compressible_weights() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers)
            if (l.compressible) n += l.weights();
        return n;
    }
};

/// Fully connected stack over `widths` (input first). With batchnorm, each
/// layer carries one full-precision batchnorm scale.
inline TopologySpec mlp_topology(std::string name, std::span<const std::size_t> widths, bool batchnorm = true) {
    if (widths.size() < 2) throw SizeError("an MLP needs at least input and output widths");
    TopologySpec t{std::move(name), {}};
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        t.layers.push_back({{widths[i + 1], widths[i]}, true, batchnorm ? std::size_t{1} : std::size_t{0}});
    t.validate();
    return t;
}

inline std::vector<std::size_t> parse_widths(std::string_view s) {
    std::vector<std::size_t> out;
    std::size_t value = 0;
    bool digits = false;
    for (char ch : s) {
        if (ch >= '0' && ch <= '9') {
            value = value * 10 + static_cast<std::size_t>(ch - '0');
            digits = true;
        } else if (ch == '-' || ch == 'x') {
            if (!digits) throw SizeError("malformed width list: " + std::string(s));
            out.push_back(value);
            value = 0;
            digits = false;
        } else {
            throw SizeError("malformed width list: " + std::string(s));
        }
    }
    if (!digits) throw SizeError("malformed width list: " + std::string(s));
    out.push_back(value);
    return out;
}

/// Named topologies: "2l-mlp" (784-1024-1024-10), "3l-mlp" (784-1024x3-10),
/// "smoke-mlp" (784-256-256-10), "mlp:<w0>-<w1>-..." and
/// "tensor:<d0>x<d1>x..." (a single compressible tensor without batchnorm).
inline TopologySpec topology_preset(std::string_view name) {
    if (name == "2l-mlp") {
        const std::size_t w[] = {784, 1024, 1024, 10};
        return mlp_topology("2l-mlp", w);
    }
    if (name == "3l-mlp") {
        const std::size_t w[] = {784, 1024, 1024, 1024, 10};
        return mlp_topology("3l-mlp", w);
    }
    if (name == "smoke-mlp") {
        const std::size_t w[] = {784, 256, 256, 10};
        return mlp_topology("smoke-mlp", w);
    }
    if (name.starts_with("mlp:")) return mlp_topology(std::string(name), parse_widths(name.substr(4)));
    if (name.starts_with("tensor:")) {
        TopologySpec t{std::string(name), {{parse_widths(name.substr(7)), true, 0}}};
        t.validate();
        return t;
    }
    throw SizeError("unknown topology '" + std::string(name) + "'");
}

/// Widths of an MLP topology (input first), for building a trainable network.
inline std::vector<std::size_t> mlp_widths(const TopologySpec& t) {
    std::vector<std::size_t> w;
    for (const auto& l : t.layers) {
        if (l.dims.size() != 2) throw SizeError("topology '" + t.name + "' is not a fully connected stack");
        if (w.empty()) w.push_back(l.dims[1]);
        if (w.back() != l.dims[1]) throw SizeError("topology '" + t.name + "' layers do not chain");
        w.push_back(l.dims[0]);
    }
    return w;
}

/// Topology describing an exported model: every layer compressible with one
/// batchnorm scale.
inline TopologySpec topology_of(const SbnnModel& model, std::string name = "model") {
    TopologySpec t{std::move(name), {}};
    for (const auto& l : model.layers()) t.layers.push_back({l.weights().dims(), true, 1});
    return t;
}

/// 32 bits per weight and per batchnorm scale.
inline std::uint64_t fp_model_size_bits(const TopologySpec& t) {
    std::uint64_t bits = 0;
    for (const auto& l : t.layers) bits += 32ULL * l.weights() + 32ULL * l.bn_scales;
    return bits;
}

/// Size of everything stored in full precision next to the compressed
/// weights: batchnorm scales and non-compressible layers.
inline std::uint64_t uncompressed_fp_bits(const TopologySpec& t) {
    std::uint64_t bits = 0;
    for (const auto& l : t.layers) {
        bits += 32ULL * l.bn_scales;
        if (!l.compressible) bits += 32ULL * l.weights();
    }
    return bits;
}

namespace detail {

inline void require_ec(double ec) {
    if (!(ec > 0.0 && ec <= 1.0)) throw DomainError("EC must lie in (0, 1], got " + std::to_string(ec));
}

/// floor(ec * n), robust to ec carrying a decimal fraction such as 0.1.
inline std::uint64_t floor_product(double ec, std::size_t n) {
    const long double p = static_cast<long double>(ec) * static_cast<long double>(n);
    const long double r = std::nearbyint(p);
    if (std::fabs(p - r) <= 1e-9L * std::max<long double>(1.0L, r)) return static_cast<std::uint64_t>(r);
    return static_cast<std::uint64_t>(std::floor(p));
}

}  // namespace detail

/// Expected index-encoding size at a uniform EC:
/// sum over compressible layers of n_bits EC N + (n_bits + 1) N / n_last + 16 D + 64,
/// n_bits = ceil(log2 n_last).
inline double bound_ie_bits(const TopologySpec& t, double ec) {
    detail::require_ec(ec);
    double bits = 0.0;
    for (const auto& l : t.layers) {
        if (!l.compressible) continue;
        const std::size_t n = l.weights();
        const std::size_t last = l.dims.back();
        const double nb = detail::ceil_log2(last);
        bits += nb * ec * static_cast<double>(n) + (nb + 1.0) * static_cast<double>(n / last) +
                16.0 * static_cast<double>(l.dims.size()) + 64.0;
    }
    return bits;
}

enum class RleBoundVariant {
    standard,     // chunk width from ceil((N - R) / (R - 1))
    pigeonhole,   // chunk width from ceil((N - R) / R)
};

/// Minimum run-length-encoding size at a uniform EC with R = floor(EC N):
/// sum of n_rle R + 32 n_1 + 16 (D + 1) + 64, n_rle = ceil(log2 ceil((N - R) / (R - 1))).
inline std::uint64_t bound_rle_bits(const TopologySpec& t, double ec,
                                    RleBoundVariant variant = RleBoundVariant::standard) {
    detail::require_ec(ec);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < t.layers.size(); ++i) {
        const auto& l = t.layers[i];
        if (!l.compressible) continue;
        const std::uint64_t n = l.weights();
        const std::uint64_t r = detail::floor_product(ec, n);
        if (r <= 1)
            throw DomainError("RLE bound undefined for layer " + std::to_string(i) + ": floor(EC*N) = " +
                              std::to_string(r) + " with N = " + std::to_string(n) +
                              "; at least two one-valued weights are needed");
        const std::uint64_t den = variant == RleBoundVariant::standard ? r - 1 : r;
        const std::uint64_t ratio = (n - r + den - 1) / den;
        const std::uint64_t nb = detail::ceil_log2(ratio);
        bits += nb * r + 32 * l.dims.front() + 16 * (l.dims.size() + 1) + 64;
    }
    return bits;
}

inline double compression_rate(std::uint64_t fp_bits, double compressed_bits, std::uint64_t uncompressed_bits) {
    return static_cast<double>(fp_bits) / (compressed_bits + static_cast<double>(uncompressed_bits));
}

/// (W_FP + W̄_FP) / (W_SBNN + W̄_FP) for encoded compressible layers.
inline double measured_cr(const TopologySpec& t, std::span<const EncodedLayer> encoded, Codec codec) {
    std::size_t expected = 0;
    for (const auto& l : t.layers) expected += l.compressible;
    if (encoded.size() != expected)
        throw SizeError("measured_cr: " + std::to_string(encoded.size()) + " encoded layers for " +
                        std::to_string(expected) + " compressible layers");
    double bits = 0.0;
    for (const auto& e : encoded) {
        if (e.codec != codec) throw SizeError("measured_cr: layer encoded with a different codec");
        bits += static_cast<double>(encoded_size_bits(e));
    }
    return compression_rate(fp_model_size_bits(t), bits, uncompressed_fp_bits(t));
}

struct MeasuredSize {
    std::uint64_t size_bits = 0;
    double cr = 0.0;
};

struct CrReport {
    std::string topology;
    double ec = 0.0;
    std::uint64_t fp_bits = 0;
    std::uint64_t uncompressed_bits = 0;
    double bound_ie_bits = 0.0;
    double bound_ie_cr = 0.0;
    std::optional<std::uint64_t> bound_rle_bits;
    std::optional<double> bound_rle_cr;
    std::optional<std::uint64_t> bound_rle_bits_pigeonhole;
    std::string rle_bound_error;
    std::map<Codec, MeasuredSize> measured;
    std::map<std::string, double> ratios;
    std::vector<double> layer_fractions;
};

/// Bound-only report at a design EC.
inline CrReport predict_bounds(const TopologySpec& t, double ec) {
    t.validate();
    CrReport r;
    r.topology = t.name;
    r.ec = ec;
    r.fp_bits = fp_model_size_bits(t);
    r.uncompressed_bits = uncompressed_fp_bits(t);
    r.bound_ie_bits = bound_ie_bits(t, ec);
    r.bound_ie_cr = compression_rate(r.fp_bits, r.bound_ie_bits, r.uncompressed_bits);
    try {
        r.bound_rle_bits = bound_rle_bits(t, ec);
        r.bound_rle_bits_pigeonhole = bound_rle_bits(t, ec, RleBoundVariant::pigeonhole);
        r.bound_rle_cr = compression_rate(r.fp_bits, static_cast<double>(*r.bound_rle_bits), r.uncompressed_bits);
    } catch (const DomainError& e) {
        r.rle_bound_error = e.what();
    }
    return r;
}

/// Measured CR for every codec against the bounds at the achieved EC of the
/// given compressible-layer weights.
inline CrReport validate_bounds(const TopologySpec& t, std::span<const PackedBitMatrix> weights) {
    std::size_t n = 0;
    std::size_t ones = 0;
    std::vector<double> fractions;
    for (const auto& w : weights) {
        n += w.size();
        ones += w.popcount_total();
        fractions.push_back(static_cast<double>(w.popcount_total()) / static_cast<double>(w.size()));
    }
    if (n == 0) throw SizeError("validate_bounds: no weights");
    std::size_t li = 0;
    for (const auto& l : t.layers) {
        if (!l.compressible) continue;
        if (li >= weights.size() || weights[li].dims() != l.dims)
            throw SizeError("validate_bounds: weights do not match topology '" + t.name + "'");
        ++li;
    }
    if (li != weights.size()) throw SizeError("validate_bounds: more weight tensors than compressible layers");

    const double ec = static_cast<double>(ones) / static_cast<double>(n);
    CrReport r = predict_bounds(t, ec > 0.0 ? ec : 1.0 / static_cast<double>(n));
    r.ec = ec;
    r.layer_fractions = std::move(fractions);
    for (Codec c : {Codec::NE, Codec::IE, Codec::RLE, Codec::HE}) {
        std::vector<EncodedLayer> enc;
        std::uint64_t bits = 0;
        for (const auto& w : weights) {
            enc.push_back(encode(w, c));
            bits += encoded_size_bits(enc.back());
        }
        r.measured[c] = {bits, measured_cr(t, enc, c)};
    }
    r.ratios["ie"] = r.measured[Codec::IE].cr / r.bound_ie_cr;
    if (r.bound_rle_cr) {
        r.ratios["rle"] = r.measured[Codec::RLE].cr / *r.bound_rle_cr;
        r.ratios["he_vs_rle_bound"] = r.measured[Codec::HE].cr / *r.bound_rle_cr;
    }
    return r;
}

inline CrReport validate_bounds(const TopologySpec& t, const SbnnModel& model) {
    std::vector<PackedBitMatrix> w;
    for (const auto& l : model.layers()) w.push_back(l.weights());
    return validate_bounds(t, w);
}

inline std::string lower_codec_name(Codec c) {
    std::string s(codec_name(c));
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

/// One metric per line, `key=value`.
inline std::string to_key_value(const CrReport& r) {
    std::ostringstream o;
    o << std::setprecision(10);
    o << "topology=" << r.topology << "\n";
    o << "ec=" << r.ec << "\n";
    o << "fp_bits=" << r.fp_bits << "\n";
    o << "uncompressed_fp_bits=" << r.uncompressed_bits << "\n";
    o << "bound_ie_bits=" << r.bound_ie_bits << "\n";
    o << "bound_ie_cr=" << r.bound_ie_cr << "\n";
    if (r.bound_rle_bits) {
        o << "bound_rle_bits=" << *r.bound_rle_bits << "\n";
        o << "bound_rle_cr=" << *r.bound_rle_cr << "\n";
        o << "bound_rle_bits_pigeonhole=" << *r.bound_rle_bits_pigeonhole << "\n";
    } else {
        o << "bound_rle_error=" << r.rle_bound_error << "\n";
    }
    for (const auto& [c, m] : r.measured) {
        o << "measured_" << lower_codec_name(c) << "_bits=" << m.size_bits << "\n";
        o << "measured_" << lower_codec_name(c) << "_cr=" << m.cr << "\n";
    }
    for (const auto& [k, v] : r.ratios) o << "ratio_" << k << "=" << v << "\n";
    for (std::size_t i = 0; i < r.layer_fractions.size(); ++i)
        o << "layer" << i << "_ones_fraction=" << r.layer_fractions[i] << "\n";
    return o.str();
}

inline std::string to_table(const CrReport& r, bool verbose = false) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(2);
    o << "topology " << r.topology << "  EC " << std::setprecision(4) << r.ec << std::setprecision(2) << "\n";
    o << "full precision  " << r.fp_bits / 8.0 / 1024.0 << " kB\n";
    o << std::left << std::setw(14) << "entry" << std::right << std::setw(16) << "bits" << std::setw(12) << "kB"
      << std::setw(10) << "CR" << "\n";
    auto row = [&o](const std::string& name, double bits, double cr) {
        o << std::left << std::setw(14) << name << std::right << std::setw(16) << std::setprecision(0) << bits
          << std::setw(12) << std::setprecision(2) << bits / 8.0 / 1024.0 << std::setw(10) << cr << "\n";
    };
    row("IE bound", r.bound_ie_bits, r.bound_ie_cr);
    if (r.bound_rle_bits)
        row("RLE bound", static_cast<double>(*r.bound_rle_bits), *r.bound_rle_cr);
    else
        o << "RLE bound     n/a (" << r.rle_bound_error << ")\n";
    if (verbose && r.bound_rle_bits_pigeonhole)
        row("RLE bound (R)", static_cast<double>(*r.bound_rle_bits_pigeonhole),
            compression_rate(r.fp_bits, static_cast<double>(*r.bound_rle_bits_pigeonhole), r.uncompressed_bits));
    for (const auto& [c, m] : r.measured) row(std::string(codec_name(c)), static_cast<double>(m.size_bits), m.cr);
    for (const auto& [k, v] : r.ratios) o << "ratio " << k << " = " << std::setprecision(4) << v << "\n";
    return o.str();
}

}  // namespace sbnn
