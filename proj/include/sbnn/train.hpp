#pragma once

#include <sbnn/bits.hpp>
#include <sbnn/data.hpp>
#include <sbnn/domain.hpp>
#include <sbnn/error.hpp>
#include <sbnn/infer.hpp>
#include <sbnn/model.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sbnn {

struct AdamaxConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    double target_ec = 1.0;
    double gamma = 0.0;
    int epochs = 40;
    int batch_size = 32;
    double lr = 0.01;
    double lr_decay_factor = 0.1;
    int lr_decay_every = 15;
    AdamaxConfig optimizer;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(target_ec > 0.0 && target_ec <= 1.0)) throw DomainError("target_ec must lie in (0, 1]");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in [0, 1)");
        if (epochs <= 0 || batch_size <= 0) throw DomainError("epochs and batch_size must be positive");
        if (!(lr > 0.0)) throw DomainError("lr must be positive");
        if (lr_decay_every <= 0 || !(lr_decay_factor > 0.0)) throw DomainError("invalid learning-rate schedule");
    }

    /// Learning rate for a 0-based epoch index.
    double lr_at(int epoch) const { return lr * std::pow(lr_decay_factor, epoch / lr_decay_every); }
};

/// Full-precision proxy weights of one binarized linear layer with its
/// antipodal domain and batchnorm.
struct LatentLayer {
    Eigen::MatrixXf latent;  // [out, in]
    AffineBinaryDomain domain = AffineBinaryDomain::antipodal(0.0F, 1.0F);
    BatchNorm bn;

    LatentLayer(Eigen::MatrixXf w, AffineBinaryDomain d, BatchNorm b)
        : latent(std::move(w)), domain(d), bn(std::move(b)) {
        if (domain.flavor() != DomainFlavor::antipodal) throw DomainError("LatentLayer needs an antipodal domain");
        if (bn.size() != static_cast<std::size_t>(latent.rows()))
            throw SizeError("LatentLayer batchnorm size must equal the output dimension");
    }

    std::size_t out_dim() const noexcept { return static_cast<std::size_t>(latent.rows()); }
    std::size_t in_dim() const noexcept { return static_cast<std::size_t>(latent.cols()); }
};

inline float sign_pm1(float v) noexcept { return v >= 0.0F ? 1.0F : -1.0F; }

inline std::vector<float> sign_ste_forward(std::span<const float> latent) {
    std::vector<float> out(latent.size());
    std::transform(latent.begin(), latent.end(), out.begin(), sign_pm1);
    return out;
}

inline Eigen::MatrixXf sign_ste_forward(const Eigen::MatrixXf& latent) { return latent.unaryExpr(&sign_pm1); }

/// Straight-through gradient: upstream passes where |latent| <= 1.
inline std::vector<float> sign_ste_backward(std::span<const float> latent, std::span<const float> upstream) {
    if (latent.size() != upstream.size()) throw SizeError("sign_ste_backward: length mismatch");
    std::vector<float> out(latent.size());
    for (std::size_t i = 0; i < latent.size(); ++i) out[i] = std::abs(latent[i]) <= 1.0F ? upstream[i] : 0.0F;
    return out;
}

/// sign(latent) * beta'' + alpha''.
inline Eigen::MatrixXf quantize_weights(const LatentLayer& layer) {
    const float a = layer.domain.alpha();
    const float b = layer.domain.beta();
    return layer.latent.unaryExpr([a, b](float v) { return sign_pm1(v) * b + a; });
}

inline double measure_ones_fraction(std::span<const Eigen::MatrixXf> antipodal) {
    std::size_t n = 0;
    std::size_t ones = 0;
    for (const auto& m : antipodal) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const float v = m.data()[i];
            if (v != 1.0F && v != -1.0F) throw DomainError("measure_ones_fraction: weight is not +-1");
            ones += v == 1.0F;
        }
        n += static_cast<std::size_t>(m.size());
    }
    if (n == 0) throw SizeError("measure_ones_fraction: empty weight set");
    return static_cast<double>(ones) / static_cast<double>(n);
}

/// ReLU(fraction_of_ones - target_ec).
inline double h_penalty(double ones_fraction, double target_ec) {
    if (!(target_ec > 0.0 && target_ec <= 1.0)) throw DomainError("h_penalty: target_ec must lie in (0, 1]");
    return std::max(0.0, ones_fraction - target_ec);
}

inline double h_penalty(std::span<const Eigen::MatrixXf> antipodal, double target_ec) {
    return h_penalty(measure_ones_fraction(antipodal), target_ec);
}

/// The lambda for which lambda h / (task_loss + lambda h) == gamma.
inline double lambda_from_gamma(double task_loss, double h, double gamma) {
    if (!(gamma < 1.0)) throw DomainError("lambda_from_gamma: gamma must be < 1");
    if (gamma < 0.0) throw DomainError("lambda_from_gamma: gamma must be >= 0");
    if (task_loss < 0.0) throw DomainError("lambda_from_gamma: task loss must be >= 0");
    if (h <= 0.0 || gamma == 0.0) return 0.0;
    return gamma * task_loss / ((1.0 - gamma) * h);
}

template <typename T>
struct AdamaxState {
    std::vector<T> m;
    std::vector<T> u;
    std::uint64_t t = 0;

    explicit AdamaxState(std::size_t n = 0) : m(n, T(0)), u(n, T(0)) {}
};

template <typename T>
inline void adamax_update(T& p, T g, T& m, T& u, T step, T b1, T b2, T eps) noexcept {
    m = b1 * m + (T(1) - b1) * g;
    u = std::max(b2 * u, std::abs(g) + eps);
    p -= step * m / u;
}

/// Advances the step counter and returns lr / (1 - beta1^t).
template <typename T>
T adamax_step_size(AdamaxState<T>& state, T lr, const AdamaxConfig& cfg) {
    ++state.t;
    return lr / (T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t))));
}

/// Adamax with the epsilon folded into the infinity norm:
/// m = b1 m + (1 - b1) g; u = max(b2 u, |g| + eps); p -= lr / (1 - b1^t) * m / u.
template <typename T>
void adamax_step(std::span<T> params, std::span<const T> grads, AdamaxState<T>& state, T lr,
                 const AdamaxConfig& cfg = {}) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.u.size() != params.size())
        throw SizeError("adamax_step: parameter, gradient and state sizes differ");
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T eps = static_cast<T>(cfg.eps);
    const T step = adamax_step_size(state, lr, cfg);
    for (std::size_t i = 0; i < params.size(); ++i)
        adamax_update(params[i], grads[i], state.m[i], state.u[i], step, b1, b2, eps);
}

/// Glorot-uniform latent weights clipped to [-1, 1], identity domain and batchnorm.
inline std::vector<LatentLayer> init_network(std::span<const std::size_t> widths, std::uint64_t seed) {
    if (widths.size() < 2) throw SizeError("init_network: need at least input and output widths");
    std::mt19937_64 rng(seed);
    std::vector<LatentLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(widths[l]);
        const auto out = static_cast<Eigen::Index>(widths[l + 1]);
        const float limit = std::min(1.0F, std::sqrt(6.0F / static_cast<float>(in + out)));
        std::uniform_real_distribution<float> dist(-limit, limit);
        Eigen::MatrixXf w(out, in);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
        layers.emplace_back(std::move(w), AffineBinaryDomain::antipodal(0.0F, 1.0F),
                            BatchNorm::identity(static_cast<std::size_t>(out)));
    }
    return layers;
}

struct EpochStats {
    double task_loss = 0.0;     // mean over batches
    double mean_lambda = 0.0;   // mean over batches
    double h = 0.0;             // after the epoch
    double ones_fraction = 0.0; // after the epoch
    double train_accuracy = 0.0;
    std::size_t batches = 0;
};

/// Optimizer state and data order for a training run.
struct TrainState {
    std::vector<AdamaxState<float>> latent;
    std::vector<AdamaxState<float>> domain;  // (alpha'', beta'') per layer
    std::vector<AdamaxState<float>> bn;      // (gamma..., beta...) per layer
    std::mt19937_64 rng;
    int epoch = 0;
    float bn_momentum = 0.1F;

    TrainState(const std::vector<LatentLayer>& layers, std::uint64_t seed)
        : rng(seed ^ 0x9E3779B97F4A7C15ULL) {
        for (const auto& l : layers) {
            latent.emplace_back(static_cast<std::size_t>(l.latent.size()));
            domain.emplace_back(2);
            bn.emplace_back(2 * l.out_dim());
        }
    }
};

inline std::size_t count_ones(const std::vector<LatentLayer>& layers, std::size_t* total = nullptr) {
    std::size_t ones = 0;
    std::size_t n = 0;
    for (const auto& l : layers) {
        ones += static_cast<std::size_t>((l.latent.array() >= 0.0F).count());
        n += static_cast<std::size_t>(l.latent.size());
    }
    if (total) *total = n;
    return ones;
}

namespace detail {

struct LayerCache {
    Eigen::MatrixXf input;
    Eigen::MatrixXf wq;  // quantized weights, kept in step with the latent weights
    Eigen::MatrixXf z;
    Eigen::MatrixXf xhat;
    Eigen::MatrixXf y;
    Eigen::VectorXf inv_std;
};

inline Eigen::MatrixXf gather_batch(const Dataset& data, std::span<const std::size_t> idx) {
    Eigen::MatrixXf x(static_cast<Eigen::Index>(data.dim), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto s = data.sample(idx[b]);
        std::copy(s.begin(), s.end(), x.col(static_cast<Eigen::Index>(b)).data());
    }
    return x;
}

/// Mean NLL of log-softmax(logits) and its gradient w.r.t. the logits.
inline double nll_loss(const Eigen::MatrixXf& logits, std::span<const std::uint8_t> labels, Eigen::MatrixXf& grad,
                       std::size_t& correct) {
    const auto batch = logits.cols();
    grad.resize(logits.rows(), batch);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto col = logits.col(b);
        Eigen::Index best = 0;
        const float mx = col.maxCoeff(&best);
        const Eigen::ArrayXf e = (col.array() - mx).exp();
        const float sum = e.sum();
        const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(b)]);
        loss -= static_cast<double>(col(label) - mx) - std::log(static_cast<double>(sum));
        grad.col(b) = (e / sum).matrix() / static_cast<float>(batch);
        grad(label, b) -= 1.0F / static_cast<float>(batch);
        correct += best == label;
    }
    return loss / static_cast<double>(batch);
}

}  // namespace detail

/// One pass over `data` in a freshly shuffled order. The loss is
/// NLL(log-softmax) + lambda h with lambda recomputed on every batch.
inline EpochStats train_epoch(std::vector<LatentLayer>& layers, TrainState& state, const Dataset& data,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (layers.empty()) throw SizeError("train_epoch: empty network");
    if (data.size() == 0) throw DataError("train_epoch: empty dataset");
    if (data.dim != layers.front().in_dim()) throw SizeError("train_epoch: sample size does not match input layer");
    for (auto label : data.labels)
        if (label >= layers.back().out_dim()) throw DataError("train_epoch: label outside the output range");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    const auto lr = static_cast<float>(cfg.lr_at(state.epoch));
    const std::size_t n_layers = layers.size();
    std::vector<detail::LayerCache> cache(n_layers);
    EpochStats stats;
    std::size_t correct = 0;
    std::size_t total_weights = 0;
    std::size_t ones = count_ones(layers, &total_weights);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::span<const std::size_t> idx(order.data() + start, stop - start);
        const auto batch = static_cast<Eigen::Index>(idx.size());
        std::vector<std::uint8_t> labels(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = data.labels[idx[b]];

        // Forward.
        Eigen::MatrixXf a = detail::gather_batch(data, idx);
        for (std::size_t l = 0; l < n_layers; ++l) {
            LatentLayer& layer = layers[l];
            auto& c = cache[l];
            c.input = std::move(a);
            if (c.wq.size() == 0) c.wq = quantize_weights(layer);
            c.z = c.wq * c.input;
            const Eigen::MatrixXf& z = c.z;
            const Eigen::VectorXf mu = z.rowwise().mean();
            const Eigen::MatrixXf centered = z.colwise() - mu;
            const Eigen::VectorXf var = centered.array().square().rowwise().mean();
            c.inv_std = (var.array() + static_cast<float>(layer.bn.eps)).rsqrt();
            c.xhat = centered.array().colwise() * c.inv_std.array();
            const Eigen::Map<const Eigen::VectorXf> g(layer.bn.gamma.data(), static_cast<Eigen::Index>(layer.out_dim()));
            const Eigen::Map<const Eigen::VectorXf> be(layer.bn.beta.data(), static_cast<Eigen::Index>(layer.out_dim()));
            c.y = (c.xhat.array().colwise() * g.array()).colwise() + be.array();

            const double mom = state.bn_momentum;
            const double unbias = batch > 1 ? static_cast<double>(batch) / static_cast<double>(batch - 1) : 1.0;
            for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                layer.bn.mean[i] = (1.0 - mom) * layer.bn.mean[i] + mom * mu(ii);
                layer.bn.var[i] = (1.0 - mom) * layer.bn.var[i] + mom * unbias * var(ii);
            }
            if (l + 1 < n_layers) a = c.y.unaryExpr(&sign_pm1);
        }

        Eigen::MatrixXf dy;
        const double task_loss = detail::nll_loss(cache.back().y, labels, dy, correct);
        if (!std::isfinite(task_loss))
            throw NumericError("non-finite task loss at epoch " + std::to_string(state.epoch) + ", sample offset " +
                               std::to_string(start));

        const double fraction = static_cast<double>(ones) / static_cast<double>(total_weights);
        const double h = h_penalty(fraction, cfg.target_ec);
        const double lambda = lambda_from_gamma(task_loss, h, cfg.gamma);
        // d(lambda h)/dw'' for every weight: the fraction is sum(w'')/(2N) + 1/2.
        const auto penalty_grad = h > 0.0 ? static_cast<float>(lambda / (2.0 * static_cast<double>(total_weights))) : 0.0F;
        stats.task_loss += task_loss;
        stats.mean_lambda += lambda;
        ++stats.batches;

        // Backward and update, last layer first.
        std::size_t new_ones = 0;
        for (std::size_t li = n_layers; li-- > 0;) {
            LatentLayer& layer = layers[li];
            auto& c = cache[li];
            const auto out = static_cast<Eigen::Index>(layer.out_dim());
            Eigen::Map<Eigen::VectorXf> g(layer.bn.gamma.data(), out);

            const Eigen::VectorXf dgamma = (dy.array() * c.xhat.array()).rowwise().sum();
            const Eigen::VectorXf dbeta = dy.rowwise().sum();
            const Eigen::ArrayXXf dxhat = dy.array().colwise() * g.array();
            const Eigen::ArrayXf sum_dxhat = dxhat.rowwise().sum();
            const Eigen::ArrayXf sum_dxhat_xhat = (dxhat * c.xhat.array()).rowwise().sum();
            const float bf = static_cast<float>(batch);
            const Eigen::MatrixXf dz =
                ((bf * dxhat).colwise() - sum_dxhat - c.xhat.array().colwise() * sum_dxhat_xhat).colwise() *
                (c.inv_std.array() / bf);
            const Eigen::MatrixXf dwq = dz * c.input.transpose();
            if (li > 0) {
                dy = c.wq.transpose() * dz;
                dy = (cache[li - 1].y.array().abs() <= 1.0F).select(dy, 0.0F);
            }

            // Domain gradients: dL/dalpha'' = 1' dz X' 1 and dL/dbeta'' = <dz, sign(latent) X>,
            // with sign(latent) X = (z - alpha'' 1 colsum(X)) / beta''.
            const float alpha = layer.domain.alpha();
            const float beta = layer.domain.beta();
            const Eigen::RowVectorXf xsum = c.input.colwise().sum();
            const float dalpha = dz.colwise().sum().dot(xsum);
            const float dbeta_dom = (dz.array() * ((c.z.rowwise() - alpha * xsum) / beta).array()).sum();

            std::array<float, 2> dom{alpha, beta};
            const std::array<float, 2> ddom{dalpha, dbeta_dom};
            adamax_step<float>(dom, ddom, state.domain[li], lr, cfg.optimizer);
            if (dom[1] == 0.0F) throw NumericError("domain scale collapsed to zero in layer " + std::to_string(li));
            layer.domain = AffineBinaryDomain::antipodal(dom[0], dom[1]);

            // Latent update: STE window, Adamax, clip to [-1, 1]; then requantize.
            auto& opt = state.latent[li];
            const float step = adamax_step_size(opt, lr, cfg.optimizer);
            const auto b1 = static_cast<float>(cfg.optimizer.beta1);
            const auto b2 = static_cast<float>(cfg.optimizer.beta2);
            const auto eps = static_cast<float>(cfg.optimizer.eps);
            const Eigen::Index n = layer.latent.size();
            Eigen::Map<Eigen::ArrayXf> w(layer.latent.data(), n);
            Eigen::Map<Eigen::ArrayXf> m(opt.m.data(), n);
            Eigen::Map<Eigen::ArrayXf> u(opt.u.data(), n);
            const Eigen::Map<const Eigen::ArrayXf> gw(dwq.data(), n);
            const Eigen::ArrayXf grad = (w.abs() <= 1.0F).select(gw * beta + penalty_grad, 0.0F);
            m = b1 * m + (1.0F - b1) * grad;
            u = (b2 * u).max(grad.abs() + eps);
            w = (w - step * m / u).max(-1.0F).min(1.0F);
            new_ones += static_cast<std::size_t>((w >= 0.0F).count());
            const float hi = 1.0F * dom[1] + dom[0];
            const float lo = -1.0F * dom[1] + dom[0];
            c.wq = (layer.latent.array() >= 0.0F).select(hi, Eigen::ArrayXXf::Constant(c.wq.rows(), c.wq.cols(), lo));

            std::vector<float> bnp(2 * layer.out_dim());
            std::vector<float> bng(2 * layer.out_dim());
            for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                bnp[i] = layer.bn.gamma[i];
                bnp[layer.out_dim() + i] = layer.bn.beta[i];
                bng[i] = dgamma(static_cast<Eigen::Index>(i));
                bng[layer.out_dim() + i] = dbeta(static_cast<Eigen::Index>(i));
            }
            adamax_step<float>(bnp, bng, state.bn[li], lr, cfg.optimizer);
            for (std::size_t i = 0; i < layer.out_dim(); ++i) {
                layer.bn.gamma[i] = bnp[i];
                layer.bn.beta[i] = bnp[layer.out_dim() + i];
            }
        }
        ones = new_ones;
    }

    ++state.epoch;
    stats.task_loss /= static_cast<double>(stats.batches);
    stats.mean_lambda /= static_cast<double>(stats.batches);
    stats.ones_fraction = static_cast<double>(ones) / static_cast<double>(total_weights);
    stats.h = h_penalty(stats.ones_fraction, cfg.target_ec);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return stats;
}

/// Inference with running batchnorm statistics on the latent network.
inline std::vector<std::size_t> predict_latent(const std::vector<LatentLayer>& layers, const Dataset& data,
                                               std::size_t chunk = 1000) {
    std::vector<std::size_t> out(data.size());
    std::vector<Eigen::MatrixXf> wq;
    for (const auto& l : layers) wq.push_back(quantize_weights(l));
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t stop = std::min(data.size(), start + chunk);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        Eigen::MatrixXf a = detail::gather_batch(data, idx);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Eigen::MatrixXf z = wq[l] * a;
            const auto& bn = layers[l].bn;
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                const auto i = static_cast<std::size_t>(r);
                const float s = static_cast<float>(bn.gamma[i] / std::sqrt(bn.var[i] + bn.eps));
                const float t = static_cast<float>(bn.beta[i] - s * bn.mean[i]);
                z.row(r) = (z.row(r).array() * s + t).matrix();
            }
            a = l + 1 < layers.size() ? z.unaryExpr(&sign_pm1) : z;
        }
        for (Eigen::Index b = 0; b < a.cols(); ++b) {
            Eigen::Index best = 0;
            a.col(b).maxCoeff(&best);
            out[start + static_cast<std::size_t>(b)] = static_cast<std::size_t>(best);
        }
    }
    return out;
}

/// Packs sign(latent) into 0/1 bits, converts the domain and fuses batchnorm.
inline SbnnModel export_sbnn(const std::vector<LatentLayer>& layers, const ModelMetadata& metadata = {}) {
    if (layers.empty()) throw SizeError("export_sbnn: empty network");
    std::vector<SbnnLayer> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LatentLayer& layer = layers[l];
        if (layer.domain.beta() == 0.0F) throw DomainError("export_sbnn: beta'' == 0");
        PackedBitMatrix bits({layer.out_dim(), layer.in_dim()});
        for (Eigen::Index r = 0; r < layer.latent.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.latent.cols(); ++c)
                if (layer.latent(r, c) >= 0.0F)
                    bits.set(static_cast<std::size_t>(r) * layer.in_dim() + static_cast<std::size_t>(c), true);
        const AffineBinaryDomain dom = to_zero_one(layer.domain);
        if (l + 1 == layers.size()) {
            auto affine = fold_output_batchnorm(layer.bn);
            out.push_back(SbnnLayer::output(std::move(bits), dom, std::move(affine.scale), std::move(affine.shift)));
        } else {
            auto fused = fuse_batchnorm_threshold(layer.bn, dom);
            out.emplace_back(std::move(bits), dom, std::move(fused.thresholds), std::move(fused.comparators));
        }
    }
    return SbnnModel(std::move(out), metadata);
}

/// Batchnorms for the reference path, aligned to the exported thresholds.
inline std::vector<BatchNorm> reference_batchnorms(const std::vector<LatentLayer>& layers, const SbnnModel& model) {
    if (layers.size() != model.layers().size()) throw SizeError("reference_batchnorms: layer count mismatch");
    std::vector<BatchNorm> out;
    for (std::size_t l = 0; l < layers.size(); ++l) out.push_back(batchnorm_at_thresholds(layers[l].bn, model.layers()[l]));
    return out;
}

// Latent checkpoint: "SBLT", u8 version, u16 layer count, then per layer
// u32 out, u32 in, out*in f32 latent (row-major), f32 alpha'', f32 beta'',
// out f32 gamma, out f32 beta, out f64 running mean, out f64 running var,
// f64 eps. Little-endian.
inline void save_latent_checkpoint(const std::vector<LatentLayer>& layers, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    auto put = [&out](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    out.write("SBLT", 4);
    put(std::uint8_t{1});
    put(static_cast<std::uint16_t>(layers.size()));
    for (const auto& l : layers) {
        put(static_cast<std::uint32_t>(l.out_dim()));
        put(static_cast<std::uint32_t>(l.in_dim()));
        for (Eigen::Index r = 0; r < l.latent.rows(); ++r)
            for (Eigen::Index c = 0; c < l.latent.cols(); ++c) put(l.latent(r, c));
        put(l.domain.alpha());
        put(l.domain.beta());
        for (float v : l.bn.gamma) put(v);
        for (float v : l.bn.beta) put(v);
        for (double v : l.bn.mean) put(v);
        for (double v : l.bn.var) put(v);
        put(l.bn.eps);
    }
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline std::vector<LatentLayer> load_latent_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    auto get = [&in, &path](auto& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw DataError("truncated checkpoint " + path.string());
    };
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SBLT", 4) != 0) throw DataError("not a latent checkpoint: " + path.string());
    std::uint8_t version = 0;
    std::uint16_t count = 0;
    get(version);
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
    get(count);
    std::vector<LatentLayer> layers;
    for (std::uint16_t l = 0; l < count; ++l) {
        std::uint32_t out_dim = 0;
        std::uint32_t in_dim = 0;
        get(out_dim);
        get(in_dim);
        Eigen::MatrixXf w(out_dim, in_dim);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) get(w(r, c));
        float alpha = 0;
        float beta = 0;
        get(alpha);
        get(beta);
        BatchNorm bn = BatchNorm::identity(out_dim);
        for (float& v : bn.gamma) get(v);
        for (float& v : bn.beta) get(v);
        for (double& v : bn.mean) get(v);
        for (double& v : bn.var) get(v);
        get(bn.eps);
        layers.emplace_back(std::move(w), AffineBinaryDomain::antipodal(alpha, beta), std::move(bn));
    }
    return layers;
}

}  // namespace sbnn
