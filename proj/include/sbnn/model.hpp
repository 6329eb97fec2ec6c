#pragma once

#include <sbnn/bits.hpp>
#include <sbnn/domain.hpp>
#include <sbnn/error.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sbnn {

/// Batch-normalization parameters and running statistics of one layer.
/// Running statistics are kept in double so that inference references built
/// from them do not add rounding of their own.
struct BatchNorm {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<double> mean;
    std::vector<double> var;
    double eps = 1e-5;

    static BatchNorm identity(std::size_t n, double eps = 1e-5) {
        return {std::vector<float>(n, 1.0F), std::vector<float>(n, 0.0F), std::vector<double>(n, 0.0),
                std::vector<double>(n, 1.0), eps};
    }

    std::size_t size() const noexcept { return gamma.size(); }

    double apply(std::size_t i, double z) const {
        return gamma[i] * (z - mean[i]) / std::sqrt(var[i] + eps) + beta[i];
    }
};

/// Threshold comparison direction of a fused batchnorm+sign neuron. The two
/// constant variants stand for neurons whose batchnorm scale is zero.
enum class Comparator : std::uint8_t { GE, LE, AlwaysPositive, AlwaysNegative };

/// One exported layer: 0/1 weights of shape [out, in], its zero_one domain and
/// either fused thresholds (hidden layers) or a per-class affine batchnorm
/// (output layer: score = scale * z + shift).
class SbnnLayer {
public:
    SbnnLayer(PackedBitMatrix weights, AffineBinaryDomain domain, std::vector<float> thresholds,
              std::vector<Comparator> comparators)
        : weights_(std::move(weights)), domain_(domain), thresholds_(std::move(thresholds)),
          comparators_(std::move(comparators)), is_output_(false) {
        check_common();
        if (thresholds_.size() != out_dim() || comparators_.size() != out_dim())
            throw SizeError("hidden layer needs one threshold and comparator per output neuron");
        build_rows();
    }

    static SbnnLayer output(PackedBitMatrix weights, AffineBinaryDomain domain, std::vector<float> scale,
                            std::vector<float> shift) {
        SbnnLayer layer(std::move(weights), domain);
        if (scale.size() != layer.out_dim() || shift.size() != layer.out_dim())
            throw SizeError("output layer needs one scale and shift per class");
        layer.out_scale_ = std::move(scale);
        layer.out_shift_ = std::move(shift);
        return layer;
    }

    const PackedBitMatrix& weights() const noexcept { return weights_; }
    const AffineBinaryDomain& domain() const noexcept { return domain_; }
    const std::vector<float>& thresholds() const noexcept { return thresholds_; }
    const std::vector<Comparator>& comparators() const noexcept { return comparators_; }
    const std::vector<float>& out_scale() const noexcept { return out_scale_; }
    const std::vector<float>& out_shift() const noexcept { return out_shift_; }
    bool is_output() const noexcept { return is_output_; }

    std::size_t out_dim() const noexcept { return weights_.dims()[0]; }
    std::size_t in_dim() const noexcept { return weights_.dims()[1]; }

    /// Row `r` of the weights, word-aligned for popcount kernels.
    std::span<const Word> row_words(std::size_t r) const noexcept {
        return std::span(rows_).subspan(r * row_stride_, row_stride_);
    }
    std::size_t row_popcount(std::size_t r) const noexcept { return row_counts_[r]; }

    friend bool operator==(const SbnnLayer& a, const SbnnLayer& b) {
        return a.weights_ == b.weights_ && a.domain_ == b.domain_ && a.thresholds_ == b.thresholds_ &&
               a.comparators_ == b.comparators_ && a.is_output_ == b.is_output_ && a.out_scale_ == b.out_scale_ &&
               a.out_shift_ == b.out_shift_;
    }

private:
    SbnnLayer(PackedBitMatrix weights, AffineBinaryDomain domain)
        : weights_(std::move(weights)), domain_(domain), is_output_(true) {
        check_common();
        build_rows();
    }

    void check_common() const {
        if (weights_.dims().size() != 2) throw SizeError("SbnnLayer weights must be 2-D [out, in]");
        if (domain_.flavor() != DomainFlavor::zero_one) throw DomainError("SbnnLayer needs a zero_one domain");
    }

    void build_rows() {
        row_stride_ = words_for(in_dim());
        rows_.assign(out_dim() * row_stride_, 0);
        row_counts_.assign(out_dim(), 0);
        for (std::size_t r = 0; r < out_dim(); ++r) {
            for (std::size_t c = 0; c < in_dim(); ++c) {
                if (weights_.get(r, c)) {
                    rows_[r * row_stride_ + c / kWordBits] |= Word{1} << (c % kWordBits);
                    ++row_counts_[r];
                }
            }
        }
    }

    PackedBitMatrix weights_;
    AffineBinaryDomain domain_;
    std::vector<float> thresholds_;
    std::vector<Comparator> comparators_;
    std::vector<float> out_scale_;
    std::vector<float> out_shift_;
    bool is_output_;

    std::vector<Word> rows_;
    std::vector<std::size_t> row_counts_;
    std::size_t row_stride_ = 0;
};

struct ModelMetadata {
    float target_ec = 1.0F;
    float gamma = 0.0F;
    std::uint32_t epochs = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

class SbnnModel {
public:
    SbnnModel(std::vector<SbnnLayer> layers, ModelMetadata metadata = {})
        : layers_(std::move(layers)), metadata_(metadata) {
        if (layers_.empty()) throw SizeError("SbnnModel needs at least one layer");
        for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
            if (layers_[l].out_dim() != layers_[l + 1].in_dim())
                throw SizeError("layer " + std::to_string(l) + " output dim " + std::to_string(layers_[l].out_dim()) +
                                " does not feed layer " + std::to_string(l + 1) + " input dim " +
                                std::to_string(layers_[l + 1].in_dim()));
            if (layers_[l].is_output()) throw SizeError("only the last layer may be an output layer");
        }
        if (!layers_.back().is_output()) throw SizeError("the last layer must be an output layer");
    }

    const std::vector<SbnnLayer>& layers() const noexcept { return layers_; }
    std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
    std::size_t output_dim() const noexcept { return layers_.back().out_dim(); }
    const ModelMetadata& metadata() const noexcept { return metadata_; }

    std::size_t total_weights() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights().size();
        return n;
    }
    std::size_t total_ones() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights().popcount_total();
        return n;
    }
    /// Achieved fraction of one-valued weights over all layers.
    double ones_fraction() const noexcept {
        return static_cast<double>(total_ones()) / static_cast<double>(total_weights());
    }

    friend bool operator==(const SbnnModel&, const SbnnModel&) = default;

private:
    std::vector<SbnnLayer> layers_;
    ModelMetadata metadata_;
};

}  // namespace sbnn
