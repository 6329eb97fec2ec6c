#pragma once

#include <sbnn/data.hpp>
#include <sbnn/design.hpp>
#include <sbnn/infer.hpp>
#include <sbnn/train.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sbnn {

struct EvalResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t mismatches = 0;  // samples where fused and reference paths disagree
    std::size_t classes = 0;
    std::vector<std::size_t> confusion;  // [true][predicted], row-major

    double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Fused inference over a dataset. With `reference` batchnorms supplied, each
/// sample also runs through the float reference path and disagreements in any
/// hidden bit or the argmax are counted.
inline EvalResult evaluate(const SbnnModel& model, std::span<const BatchNorm> reference, const Dataset& data) {
    if (data.dim != model.input_dim())
        throw SizeError("model expects " + std::to_string(model.input_dim()) + " inputs, dataset has " +
                        std::to_string(data.dim));
    EvalResult r;
    r.classes = model.output_dim();
    r.confusion.assign(r.classes * r.classes, 0);
    std::optional<ReferenceModel> ref;
    if (!reference.empty()) ref.emplace(model, reference);
    constexpr std::size_t block = 64;
    for (std::size_t first = 0; first < data.size(); first += block) {
        const std::size_t count = std::min(block, data.size() - first);
        std::vector<ForwardTrace> refs;
        if (ref) refs = ref->traces(std::span(data.images).subspan(first * data.dim, count * data.dim), count);
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t i = first + k;
            const auto fused = forward_fused_trace(model, data.sample(i));
            const std::size_t pred = argmax(fused.scores);
            if (ref) r.mismatches += fused.hidden != refs[k].hidden || argmax(refs[k].scores) != pred;
            const std::size_t label = data.labels[i];
            r.correct += pred == label;
            if (label < r.classes) ++r.confusion[label * r.classes + pred];
            ++r.total;
        }
    }
    return r;
}

inline double latent_accuracy(const std::vector<LatentLayer>& layers, const Dataset& data) {
    const auto pred = predict_latent(layers, data);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == data.labels[i];
    return data.size() ? static_cast<double>(ok) / static_cast<double>(data.size()) : 0.0;
}

using EpochCallback = std::function<void(int epoch, const EpochStats&, const std::vector<LatentLayer>&)>;

/// Runs the remaining epochs of `cfg` on `layers`, starting at `first_epoch`.
inline std::vector<EpochStats> train_network(std::vector<LatentLayer>& layers, const TrainConfig& cfg,
                                             const Dataset& train, const EpochCallback& on_epoch = {},
                                             int first_epoch = 0) {
    cfg.validate();
    TrainState state(layers, cfg.seed);
    state.epoch = first_epoch;
    std::vector<EpochStats> history;
    for (int e = first_epoch; e < cfg.epochs; ++e) {
        history.push_back(train_epoch(layers, state, train, cfg));
        if (on_epoch) on_epoch(e, history.back(), layers);
        ++state.epoch;
    }
    return history;
}

/// Ordered key=value record of a training run.
class Manifest {
public:
    template <typename T>
    void set(const std::string& key, const T& value) {
        std::ostringstream o;
        o << std::setprecision(10) << value;
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = o.str();
                return;
            }
        entries_.emplace_back(key, o.str());
    }

    void merge(const std::string& prefix, const std::string& key_value_text) {
        std::istringstream in(key_value_text);
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) set(prefix + line.substr(0, eq), line.substr(eq + 1));
        }
    }

    std::string get(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        throw DataError("manifest has no key '" + key + "'");
    }

    std::string str() const {
        std::string s;
        for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
        return s;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        out << str();
    }

    static Manifest load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        Manifest m;
        m.merge("", buf.str());
        return m;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace sbnn
