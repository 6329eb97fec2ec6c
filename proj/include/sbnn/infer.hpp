#pragma once

#include <sbnn/bits.hpp>
#include <sbnn/domain.hpp>
#include <sbnn/error.hpp>
#include <sbnn/model.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sbnn {

/// Binary activations: bit 1 is +1, bit 0 is -1.
using BitActivations = BitVector;

inline BitActivations to_bits(std::span<const int> antipodal) {
    BitActivations x(antipodal.size());
    for (std::size_t i = 0; i < antipodal.size(); ++i) x.set(i, antipodal[i] > 0);
    return x;
}

/// Signed sum of the activations selected by a 0/1 weight row:
/// sum_{i : row_i = 1} x_i = 2 popcount(row & x) - popcount(row).
inline std::int32_t popcount_dot(std::span<const Word> row, std::span<const Word> x) {
    if (row.size() != x.size()) throw SizeError("popcount_dot: row and activations differ in length");
    std::int32_t both = 0;
    std::int32_t ones = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        both += std::popcount(row[i] & x[i]);
        ones += std::popcount(row[i]);
    }
    return 2 * both - ones;
}

inline std::int32_t popcount_dot(const BitVector& row, const BitActivations& x) {
    if (row.size() != x.size())
        throw SizeError("popcount_dot: row has " + std::to_string(row.size()) + " bits, activations " +
                        std::to_string(x.size()));
    return popcount_dot(row.words(), x.words());
}

/// Sum of all activations, 2 popcount(x) - |x|; shared by every neuron of a layer.
inline std::int32_t compute_q(const BitActivations& x) noexcept {
    return 2 * static_cast<std::int32_t>(x.count()) - static_cast<std::int32_t>(x.size());
}

struct FusedThresholds {
    std::vector<float> thresholds;
    std::vector<Comparator> comparators;
};

/// Folds batchnorm followed by sign into a per-neuron threshold on z' = w' x.
///
/// With sigma = sqrt(var + eps), batchnorm(z) >= 0 iff z >= delta for gamma > 0
/// (z <= delta for gamma < 0), where delta = mean - beta * sigma / gamma.
/// Substituting z = beta' (z' + alpha' q) gives z' >= delta / beta' - alpha' q,
/// with the inequality reversed when gamma * beta' < 0. The alpha' q term is
/// left to run time. A zero gamma pins the neuron to sign(beta).
inline FusedThresholds fuse_batchnorm_threshold(const BatchNorm& bn, const AffineBinaryDomain& domain) {
    if (domain.flavor() != DomainFlavor::zero_one)
        throw DomainError("fuse_batchnorm_threshold needs the exported zero_one domain");
    const std::size_t n = bn.size();
    FusedThresholds out;
    out.thresholds.resize(n);
    out.comparators.resize(n);
    const double bp = domain.beta();
    constexpr float inf = std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = bn.gamma[i];
        if (g == 0.0) {
            const bool pos = bn.beta[i] >= 0.0F;
            out.comparators[i] = pos ? Comparator::AlwaysPositive : Comparator::AlwaysNegative;
            out.thresholds[i] = pos ? -inf : inf;
            continue;
        }
        const double sigma = std::sqrt(bn.var[i] + bn.eps);
        const double delta = bn.mean[i] - static_cast<double>(bn.beta[i]) * sigma / g;
        out.thresholds[i] = static_cast<float>(delta / bp);
        out.comparators[i] = g * bp > 0.0 ? Comparator::GE : Comparator::LE;
    }
    return out;
}

struct OutputAffine {
    std::vector<float> scale;
    std::vector<float> shift;
};

/// Output-layer batchnorm as score = scale * z + shift.
inline OutputAffine fold_output_batchnorm(const BatchNorm& bn) {
    OutputAffine out;
    for (std::size_t i = 0; i < bn.size(); ++i) {
        const double s = bn.gamma[i] / std::sqrt(bn.var[i] + bn.eps);
        out.scale.push_back(static_cast<float>(s));
        out.shift.push_back(static_cast<float>(bn.beta[i] - s * bn.mean[i]));
    }
    return out;
}

inline bool fires(Comparator c, double z_prime, double rhs) noexcept {
    switch (c) {
        case Comparator::GE: return z_prime >= rhs;
        case Comparator::LE: return z_prime <= rhs;
        case Comparator::AlwaysPositive: return true;
        case Comparator::AlwaysNegative: return false;
    }
    return false;
}

struct ForwardTrace {
    std::vector<BitActivations> hidden;  // one per hidden layer
    std::vector<double> scores;
};

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

namespace detail {

inline BitActivations threshold_layer(const SbnnLayer& layer, std::span<const double> z_prime, double q) {
    BitActivations out(layer.out_dim());
    const double alpha = layer.domain().alpha();
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        const double rhs = static_cast<double>(layer.thresholds()[i]) - alpha * q;
        if (fires(layer.comparators()[i], z_prime[i], rhs)) out.set(i, true);
    }
    return out;
}

inline std::vector<double> output_scores(const SbnnLayer& layer, std::span<const double> z_prime, double q) {
    const double a = layer.domain().alpha();
    const double b = layer.domain().beta();
    std::vector<double> scores(layer.out_dim());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double z = b * z_prime[i] + b * a * q;
        scores[i] = static_cast<double>(layer.out_scale()[i]) * z + static_cast<double>(layer.out_shift()[i]);
    }
    return scores;
}

}  // namespace detail

/// Popcount inference. The first layer accumulates real inputs selected by
/// one-valued weights; later layers use popcount_dot on packed activations.
/// Hidden neurons fire when z' compares against (threshold - alpha' q).
inline ForwardTrace forward_fused_trace(const SbnnModel& model, std::span<const float> input) {
    if (input.size() != model.input_dim())
        throw SizeError("forward_fused: input has " + std::to_string(input.size()) + " values, model expects " +
                        std::to_string(model.input_dim()));
    ForwardTrace trace;
    const auto& layers = model.layers();

    // First layer on real inputs.
    const SbnnLayer& first = layers.front();
    double q = 0.0;
    for (float v : input) q += v;
    std::vector<double> z_prime(first.out_dim(), 0.0);
    for (std::size_t r = 0; r < first.out_dim(); ++r) {
        const auto row = first.row_words(r);
        double acc = 0.0;
        for (std::size_t w = 0; w < row.size(); ++w) {
            Word bits = row[w];
            while (bits) {
                acc += input[w * kWordBits + static_cast<std::size_t>(std::countr_zero(bits))];
                bits &= bits - 1;
            }
        }
        z_prime[r] = acc;
    }
    if (first.is_output()) {
        trace.scores = detail::output_scores(first, z_prime, q);
        return trace;
    }
    trace.hidden.push_back(detail::threshold_layer(first, z_prime, q));

    for (std::size_t l = 1; l < layers.size(); ++l) {
        const SbnnLayer& layer = layers[l];
        const BitActivations& x = trace.hidden.back();
        const double ql = compute_q(x);
        z_prime.assign(layer.out_dim(), 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) z_prime[r] = popcount_dot(layer.row_words(r), x.words());
        if (layer.is_output()) {
            trace.scores = detail::output_scores(layer, z_prime, ql);
            return trace;
        }
        trace.hidden.push_back(detail::threshold_layer(layer, z_prime, ql));
    }
    return trace;
}

inline std::vector<double> forward_fused(const SbnnModel& model, std::span<const float> input) {
    return forward_fused_trace(model, input).scores;
}

/// Dense real-valued path: weights (w' + alpha') beta', explicit batchnorm,
/// sign(0) = +1. Weights are unpacked once; `traces` runs a block of samples
/// together, each accumulated in input order exactly as a single sample would be.
class ReferenceModel {
public:
    ReferenceModel(const SbnnModel& model, std::span<const BatchNorm> bn)
        : bn_(bn.begin(), bn.end()), input_dim_(model.input_dim()) {
        if (bn.size() != model.layers().size()) throw SizeError("forward_reference: need one batchnorm per layer");
        for (std::size_t l = 0; l < model.layers().size(); ++l) {
            const SbnnLayer& layer = model.layers()[l];
            if (bn[l].size() != layer.out_dim()) throw SizeError("forward_reference: batchnorm size mismatch");
            const double w0 = layer.domain().value(false);
            const double w1 = layer.domain().value(true);
            Dense d{layer.out_dim(), layer.in_dim(), std::vector<double>(layer.out_dim() * layer.in_dim())};
            for (std::size_t r = 0; r < d.rows; ++r)
                for (std::size_t c = 0; c < d.cols; ++c) d.w[r * d.cols + c] = layer.weights().get(r, c) ? w1 : w0;
            layers_.push_back(std::move(d));
        }
    }

    std::size_t input_dim() const noexcept { return input_dim_; }

    /// `inputs` holds `count` samples back to back.
    std::vector<ForwardTrace> traces(std::span<const float> inputs, std::size_t count) const {
        if (inputs.size() != count * input_dim_) throw SizeError("forward_reference: input dimension mismatch");
        std::vector<ForwardTrace> out(count);
        // x is [feature][sample] so the innermost loop runs across independent samples.
        std::vector<double> x(input_dim_ * count);
        for (std::size_t b = 0; b < count; ++b)
            for (std::size_t c = 0; c < input_dim_; ++c) x[c * count + b] = inputs[b * input_dim_ + c];
        std::vector<double> z(count);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Dense& d = layers_[l];
            const bool output = l + 1 == layers_.size();
            std::vector<double> next(output ? 0 : d.rows * count);
            for (std::size_t b = 0; b < count; ++b) {
                if (output) out[b].scores.resize(d.rows);
                else out[b].hidden.emplace_back(d.rows);
            }
            for (std::size_t r = 0; r < d.rows; ++r) {
                std::fill(z.begin(), z.end(), 0.0);
                const double* w = d.w.data() + r * d.cols;
                for (std::size_t c = 0; c < d.cols; ++c) {
                    const double wc = w[c];
                    const double* xc = x.data() + c * count;
                    for (std::size_t b = 0; b < count; ++b) z[b] += wc * xc[b];
                }
                for (std::size_t b = 0; b < count; ++b) {
                    const double y = bn_[l].apply(r, z[b]);
                    if (output) {
                        out[b].scores[r] = y;
                        continue;
                    }
                    out[b].hidden.back().set(r, y >= 0.0);
                    next[r * count + b] = y >= 0.0 ? 1.0 : -1.0;
                }
            }
            x = std::move(next);
        }
        return out;
    }

    ForwardTrace trace(std::span<const float> input) const { return std::move(traces(input, 1).front()); }

private:
    struct Dense {
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<double> w;  // row-major
    };

    std::vector<Dense> layers_;
    std::vector<BatchNorm> bn_;
    std::size_t input_dim_ = 0;
};

inline ForwardTrace forward_reference_trace(const SbnnModel& model, std::span<const BatchNorm> bn,
                                            std::span<const float> input) {
    if (input.size() != model.input_dim()) throw SizeError("forward_reference: input dimension mismatch");
    return ReferenceModel(model, bn).trace(input);
}

/// Batchnorm equivalent to `bn` whose hidden-layer decision boundary sits
/// exactly on the stored float threshold: mean = beta' * threshold, beta = 0.
/// beta' * threshold is a product of two floats and therefore exact in double.
inline BatchNorm batchnorm_at_thresholds(const BatchNorm& bn, const SbnnLayer& layer) {
    if (layer.is_output()) return bn;
    BatchNorm out = bn;
    const double bp = layer.domain().beta();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Comparator c = layer.comparators()[i];
        if (c == Comparator::AlwaysPositive || c == Comparator::AlwaysNegative) {
            out.gamma[i] = 0.0F;
            out.beta[i] = c == Comparator::AlwaysPositive ? 1.0F : -1.0F;
            continue;
        }
        out.mean[i] = bp * static_cast<double>(layer.thresholds()[i]);
        out.beta[i] = 0.0F;
    }
    return out;
}

/// Batchnorm reconstructed from the exported model alone: unit-scale
/// normalization whose sign agrees with each comparator, and the output
/// layer's affine scores.
inline std::vector<BatchNorm> batchnorm_from_model(const SbnnModel& model) {
    std::vector<BatchNorm> out;
    for (const auto& layer : model.layers()) {
        const std::size_t n = layer.out_dim();
        BatchNorm bn = BatchNorm::identity(n, 0.0);
        if (layer.is_output()) {
            for (std::size_t i = 0; i < n; ++i) {
                bn.gamma[i] = layer.out_scale()[i];
                bn.beta[i] = layer.out_shift()[i];
            }
        } else {
            const float sign_bp = layer.domain().beta() > 0 ? 1.0F : -1.0F;
            for (std::size_t i = 0; i < n; ++i) {
                if (layer.comparators()[i] == Comparator::GE) bn.gamma[i] = sign_bp;
                if (layer.comparators()[i] == Comparator::LE) bn.gamma[i] = -sign_bp;
            }
            bn = batchnorm_at_thresholds(bn, layer);
        }
        out.push_back(std::move(bn));
    }
    return out;
}

struct LayerOps {
    std::size_t sbnn_ops;
    std::size_t bnn_ops;
    double gain;
};

/// Binary operation counts per layer. A BNN layer costs 2 N (xnor and
/// popcount per weight); the sparse layer costs one popcount position per
/// one-valued weight plus a single shared reduction for q.
inline std::vector<LayerOps> count_binary_ops(const SbnnModel& model) {
    std::vector<LayerOps> out;
    for (const auto& layer : model.layers()) {
        const std::size_t n = layer.weights().size();
        const std::size_t s = layer.weights().popcount_total() + 1;
        out.push_back({s, 2 * n, static_cast<double>(2 * n) / static_cast<double>(s)});
    }
    return out;
}

}  // namespace sbnn
