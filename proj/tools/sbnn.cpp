// sbnn: train, compress, bound and evaluate sparse binary networks.

#include <sbnn/sbnn.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <random>

namespace {

using namespace sbnn;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string default_data_dir() {
    const char* env = std::getenv("SBNN_DATA_DIR");
    return env ? env : "data/mnist";
}

std::string quoted(std::string s) {
    for (auto& c : s)
        if (c == '"' || c == '\n') c = '\'';
    return "\"" + s + "\"";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Codec codec_or_throw(const std::string& name) {
    const auto c = parse_codec(name);
    if (!c) throw DomainError("unknown codec '" + name + "' (expected ne, ie, rle, he)");
    return *c;
}

struct TrainArgs {
    std::string topology = "2l-mlp";
    double ec = 1.0;
    double gamma = 0.0;
    int epochs = 40;
    double lr = 0.01;
    int batch = 32;
    std::uint64_t seed = 1;
    std::string data = default_data_dir();
    std::string out = "run";
    std::string codec = "ne";
    std::string resume;
    int start_epoch = 0;
    bool any_split = false;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg;
    cfg.target_ec = a.ec;
    cfg.gamma = a.gamma;
    cfg.epochs = a.epochs;
    cfg.lr = a.lr;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    cfg.validate();
    const Codec codec = codec_or_throw(a.codec);

    const auto topo = topology_preset(a.topology);
    const auto widths = mlp_widths(topo);
    const auto data = load_mnist(a.data, !a.any_split);
    if (widths.front() != data.train.dim)
        throw SizeError("topology input width " + std::to_string(widths.front()) + " does not match " +
                        std::to_string(data.train.dim) + " pixels");
    if (widths.back() != data.train.classes) throw SizeError("topology output width must equal the class count");

    auto layers = a.resume.empty() ? init_network(widths, cfg.seed) : load_latent_checkpoint(a.resume);
    if (!a.resume.empty()) {
        std::vector<std::size_t> got{layers.front().in_dim()};
        for (const auto& l : layers) got.push_back(l.out_dim());
        if (got != widths) throw SizeError("checkpoint " + a.resume + " does not match topology " + a.topology);
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto t_epoch = t0;
    const auto history = train_network(
        layers, cfg, data.train,
        [&](int e, const EpochStats& s, const std::vector<LatentLayer>& net) {
            std::cout << "epoch=" << e + 1 << " loss=" << s.task_loss << " lambda=" << s.mean_lambda
                      << " ones_fraction=" << s.ones_fraction << " train_accuracy=" << s.train_accuracy
                      << " test_accuracy=" << latent_accuracy(net, data.test) << " seconds=" << seconds_since(t_epoch)
                      << std::endl;
            t_epoch = std::chrono::steady_clock::now();
        },
        a.start_epoch);
    const double wall = seconds_since(t0);

    const ModelMetadata meta{static_cast<float>(cfg.target_ec), static_cast<float>(cfg.gamma),
                             static_cast<std::uint32_t>(cfg.epochs), cfg.seed};
    const auto model = export_sbnn(layers, meta);
    const auto reference = reference_batchnorms(layers, model);
    const auto eval = evaluate(model, reference, data.test);
    const auto report = validate_bounds(topology_of(model, a.topology), model);

    fs::create_directories(a.out);
    save_container(fs::path(a.out) / "model.sbnn", model, codec);
    save_latent_checkpoint(layers, fs::path(a.out) / "latent.ckpt");

    Manifest m;
    m.set("topology", a.topology);
    m.set("target_ec", cfg.target_ec);
    m.set("gamma", cfg.gamma);
    m.set("epochs", cfg.epochs);
    m.set("lr", cfg.lr);
    m.set("lr_decay_factor", cfg.lr_decay_factor);
    m.set("lr_decay_every", cfg.lr_decay_every);
    m.set("batch", cfg.batch_size);
    m.set("seed", cfg.seed);
    m.set("codec", lower_codec_name(codec));
    m.set("achieved_ec", model.ones_fraction());
    m.set("accuracy", eval.accuracy());
    m.set("fused_reference_mismatches", eval.mismatches);
    if (!history.empty()) {
        m.set("final_task_loss", history.back().task_loss);
        m.set("final_train_accuracy", history.back().train_accuracy);
    }
    m.merge("cr.", to_key_value(report));
    m.set("wall_time_s", wall);
    m.save(fs::path(a.out) / "manifest.txt");
    std::cout << m.str();
    return eval.mismatches == 0 ? kOk : kNumeric;
}

struct CompressArgs {
    std::string model;
    std::string codec = "all";
    std::string out;
};

int cmd_compress(const CompressArgs& a) {
    const auto contents = load_container(a.model);
    const auto& model = contents.model;
    const auto topo = topology_of(model);
    std::vector<Codec> codecs;
    if (a.codec == "all")
        codecs = {Codec::NE, Codec::IE, Codec::RLE, Codec::HE};
    else
        codecs = {codec_or_throw(a.codec)};

    std::cout << "model=" << a.model << "\n";
    std::cout << "ones_fraction=" << model.ones_fraction() << "\n";
    std::cout << "fp_bits=" << fp_model_size_bits(topo) << "\n";
    for (Codec c : codecs) {
        const auto enc = encode_model(model, c);
        std::uint64_t bits = 0;
        for (const auto& e : enc) bits += encoded_size_bits(e);
        const std::string name = lower_codec_name(c);
        std::cout << name << "_size_bits=" << bits << "\n";
        std::cout << name << "_size_kb=" << static_cast<double>(bits) / 8.0 / 1000.0 << "\n";
        std::cout << name << "_cr=" << measured_cr(topo, enc, c) << "\n";
        if (codecs.size() == 1 || !a.out.empty()) {
            fs::path out = a.out.empty() ? fs::path(a.model).replace_extension("." + name + ".sbnn") : fs::path(a.out);
            if (codecs.size() > 1) out = out.parent_path() / (out.stem().string() + "." + name + out.extension().string());
            save_container(out, model, c);
            std::cout << name << "_file=" << out.string() << "\n";
            std::cout << name << "_file_bytes=" << fs::file_size(out) << "\n";
        }
    }
    return kOk;
}

struct BoundsArgs {
    std::string topology = "2l-mlp";
    double ec = 0.1;
    bool verbose = false;
    bool table = false;
    std::string out;
};

int cmd_bounds(const BoundsArgs& a) {
    const auto report = predict_bounds(topology_preset(a.topology), a.ec);
    std::cout << (a.table ? to_table(report, a.verbose) : to_key_value(report));
    if (!a.out.empty()) {
        std::ofstream f(a.out);
        if (!f) throw DataError("cannot write " + a.out);
        f << to_key_value(report);
    }
    if (!report.rle_bound_error.empty()) throw DomainError(report.rle_bound_error);
    return kOk;
}

struct EvalArgs {
    std::string model;
    std::string latent;
    std::string data = default_data_dir();
    bool any_split = false;
    bool confusion = false;
};

int cmd_eval(const EvalArgs& a) {
    const auto model = load_container(a.model).model;
    const auto data = load_mnist(a.data, !a.any_split);
    std::vector<BatchNorm> reference;
    if (a.latent.empty()) {
        reference = batchnorm_from_model(model);
    } else {
        reference = reference_batchnorms(load_latent_checkpoint(a.latent), model);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = evaluate(model, reference, data.test);
    std::cout << "samples=" << r.total << "\n";
    std::cout << "accuracy=" << std::setprecision(6) << r.accuracy() << "\n";
    std::cout << "fused_reference_mismatches=" << r.mismatches << "\n";
    std::cout << "seconds=" << seconds_since(t0) << "\n";
    for (std::size_t c = 0; c < r.classes; ++c) {
        std::size_t row = 0;
        for (std::size_t p = 0; p < r.classes; ++p) row += r.confusion[c * r.classes + p];
        const double recall = row ? static_cast<double>(r.confusion[c * r.classes + c]) / static_cast<double>(row) : 0.0;
        std::cout << "class" << c << "_recall=" << recall << "\n";
        if (a.confusion) {
            std::cout << "class" << c << "_confusion=";
            for (std::size_t p = 0; p < r.classes; ++p) std::cout << (p ? "," : "") << r.confusion[c * r.classes + p];
            std::cout << "\n";
        }
    }
    if (r.mismatches != 0) throw NumericError("fused and reference inference disagree on " +
                                              std::to_string(r.mismatches) + " samples");
    return kOk;
}

struct BenchArgs {
    std::string model;
    std::string data;
    std::size_t samples = 1000;
    std::uint64_t seed = 1;
};

int cmd_bench(const BenchArgs& a) {
    const auto model = load_container(a.model).model;
    const auto ops = count_binary_ops(model);
    std::uint64_t sbnn_total = 0, bnn_total = 0;
    for (std::size_t l = 0; l < ops.size(); ++l) {
        std::cout << "layer" << l << "_sbnn_ops=" << ops[l].sbnn_ops << "\n";
        std::cout << "layer" << l << "_bnn_ops=" << ops[l].bnn_ops << "\n";
        std::cout << "layer" << l << "_gain=" << ops[l].gain << "\n";
        sbnn_total += ops[l].sbnn_ops;
        bnn_total += ops[l].bnn_ops;
    }
    std::cout << "total_sbnn_ops=" << sbnn_total << "\n";
    std::cout << "total_bnn_ops=" << bnn_total << "\n";
    std::cout << "total_gain=" << static_cast<double>(bnn_total) / static_cast<double>(sbnn_total) << "\n";

    std::vector<float> inputs;
    std::size_t n = a.samples;
    if (!a.data.empty()) {
        const auto d = load_mnist(a.data, false).test;
        if (d.dim != model.input_dim()) throw SizeError("bench data does not match the model input width");
        n = std::min(n, d.size());
        inputs.assign(d.images.begin(), d.images.begin() + static_cast<std::ptrdiff_t>(n * d.dim));
    } else {
        std::mt19937_64 rng(a.seed);
        std::uniform_real_distribution<float> u(-1.0F, 1.0F);
        inputs.resize(n * model.input_dim());
        for (auto& v : inputs) v = u(rng);
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t checksum = 0;
    for (std::size_t i = 0; i < n; ++i)
        checksum += argmax(forward_fused(model, std::span<const float>(inputs).subspan(i * model.input_dim(),
                                                                                       model.input_dim())));
    const double s = seconds_since(t0);
    std::cout << "bench_samples=" << n << "\n";
    std::cout << "bench_seconds=" << s << "\n";
    std::cout << "samples_per_second=" << (s > 0 ? static_cast<double>(n) / s : 0.0) << "\n";
    std::cout << "argmax_checksum=" << checksum << "\n";
    return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
    std::cerr << "error=" << kind << " message=" << quoted(e.what()) << " exit_code=" << code << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse binary neural networks: training, compression and design bounds"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train an MLP on MNIST and export it");
    train->add_option("--topology", ta.topology, "2l-mlp, 3l-mlp, smoke-mlp or mlp:<w0>-<w1>-...")
        ->capture_default_str();
    train->add_option("--ec", ta.ec, "Target fraction of one-valued weights")->capture_default_str();
    train->add_option("--gamma", ta.gamma, "Share of the loss given to the sparsity penalty, in [0, 1)")
        ->capture_default_str();
    train->add_option("--epochs", ta.epochs)->capture_default_str();
    train->add_option("--lr", ta.lr)->capture_default_str();
    train->add_option("--batch", ta.batch)->capture_default_str();
    train->add_option("--seed", ta.seed)->capture_default_str();
    train->add_option("--data", ta.data, "Directory with the MNIST IDX files (default $SBNN_DATA_DIR)");
    train->add_option("--out", ta.out, "Output directory")->capture_default_str();
    train->add_option("--codec", ta.codec, "Codec for model.sbnn")->capture_default_str();
    train->add_option("--resume", ta.resume, "Latent checkpoint to continue from");
    train->add_option("--start-epoch", ta.start_epoch, "0-based epoch to resume at")->capture_default_str();
    train->add_flag("--any-split", ta.any_split, "Accept IDX files other than the canonical 60k/10k split");

    CompressArgs ca;
    auto* compress = app.add_subcommand("compress", "Re-encode a model and report sizes and compression rates");
    compress->add_option("model", ca.model)->required();
    compress->add_option("--codec", ca.codec, "ne, ie, rle, he or all")->capture_default_str();
    compress->add_option("--out", ca.out, "Output container path");

    BoundsArgs ba;
    auto* bounds = app.add_subcommand("bounds", "Predict compression bounds for a topology");
    bounds->add_option("--topology", ba.topology, "Preset, mlp:<widths> or tensor:<dims>")->capture_default_str();
    bounds->add_option("--ec", ba.ec)->capture_default_str();
    bounds->add_flag("--verbose", ba.verbose, "Also show the pigeonhole variant of the RLE bound");
    bounds->add_flag("--table", ba.table, "Human-readable table instead of key=value");
    bounds->add_option("--out", ba.out, "Write the key=value report to a file");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Accuracy of a model on the test split");
    eval->add_option("model", ea.model)->required();
    eval->add_option("--latent", ea.latent, "Latent checkpoint supplying the reference batchnorms");
    eval->add_option("--data", ea.data, "Directory with the MNIST IDX files (default $SBNN_DATA_DIR)");
    eval->add_flag("--any-split", ea.any_split, "Accept IDX files other than the canonical 60k/10k split");
    eval->add_flag("--confusion", ea.confusion, "Print the confusion matrix rows");

    BenchArgs be;
    auto* bench = app.add_subcommand("bench", "Binary op counts and fused-inference throughput");
    bench->add_option("model", be.model)->required();
    bench->add_option("--data", be.data, "Use test images from this IDX directory instead of random inputs");
    bench->add_option("--samples", be.samples)->capture_default_str();
    bench->add_option("--seed", be.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train) return cmd_train(ta);
        if (*compress) return cmd_compress(ca);
        if (*bounds) return cmd_bounds(ba);
        if (*eval) return cmd_eval(ea);
        if (*bench) return cmd_bench(be);
    } catch (const DomainError& e) {
        return report("domain", e, kUsage);
    } catch (const DataError& e) {
        return report("data", e, kData);
    } catch (const CorruptStream& e) {
        return report("corrupt", e, kData);
    } catch (const SizeError& e) {
        return report("size", e, kData);
    } catch (const NumericError& e) {
        return report("numeric", e, kNumeric);
    } catch (const std::exception& e) {
        return report("internal", e, kData);
    }
    return kUsage;
}
