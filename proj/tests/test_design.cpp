#include "test_support.hpp"

#include <sbnn/design.hpp>

#include <gtest/gtest.h>

using namespace sbnn;
using sbnn::testing::random_matrix;

namespace {

constexpr double kMiB = 8.0 * 1024.0 * 1024.0;

TopologySpec tiny_layer() { return topology_preset("tensor:4x8"); }

}  // namespace

TEST(Topology, Presets) {
    const auto t = topology_preset("2l-mlp");
    ASSERT_EQ(t.layers.size(), 3U);
    EXPECT_EQ(t.layers[0].dims, (std::vector<std::size_t>{1024, 784}));
    EXPECT_EQ(t.layers[2].dims, (std::vector<std::size_t>{10, 1024}));
    EXPECT_EQ(mlp_widths(t), (std::vector<std::size_t>{784, 1024, 1024, 10}));
    EXPECT_EQ(mlp_widths(topology_preset("mlp:20-30-5")), (std::vector<std::size_t>{20, 30, 5}));
    EXPECT_EQ(topology_preset("tensor:128x128x3x3").layers[0].weights(), 147456U);
    EXPECT_THROW(topology_preset("resnet"), SizeError);
    EXPECT_THROW(topology_preset("mlp:20--5"), SizeError);
    EXPECT_THROW(topology_preset("tensor:70000x2"), SizeError);
}

TEST(FpSize, SingleLayerWithoutBatchnorm) { EXPECT_EQ(fp_model_size_bits(tiny_layer()), 1024U); }

TEST(FpSize, PublishedMlpSizes) {
    EXPECT_NEAR(static_cast<double>(fp_model_size_bits(topology_preset("2l-mlp"))) / kMiB, 7.1, 0.05);
    EXPECT_NEAR(static_cast<double>(fp_model_size_bits(topology_preset("3l-mlp"))) / kMiB, 11.1, 0.05);
}

TEST(IeBound, TinyLayer) { EXPECT_DOUBLE_EQ(bound_ie_bits(tiny_layer(), 0.25), 136.0); }

TEST(IeBound, AffineInEc) {
    const auto t = topology_preset("2l-mlp");
    const double a = bound_ie_bits(t, 0.02), b = bound_ie_bits(t, 0.04), c = bound_ie_bits(t, 0.06);
    EXPECT_NEAR(c - b, b - a, 1e-6 * c);
    EXPECT_GT(b, a);
}

TEST(IeBound, DenseLimitIsIndexing) {
    const auto t = topology_preset("tensor:512x512");
    const double n = 512.0 * 512.0;
    EXPECT_NEAR(bound_ie_bits(t, 1.0) / (9.0 * n), 1.0, 0.12);
}

TEST(IeBound, RejectsEcOutsideUnitInterval) {
    EXPECT_THROW(bound_ie_bits(tiny_layer(), 0.0), DomainError);
    EXPECT_THROW(bound_ie_bits(tiny_layer(), 1.5), DomainError);
}

TEST(IeBound, MatchesMeanOfBernoulliDraws) {
    std::mt19937_64 rng(21);
    const auto t = topology_preset("tensor:256x512");
    for (double ec : {0.02, 0.1, 0.3}) {
        double sum = 0.0;
        const int draws = 20;
        for (int d = 0; d < draws; ++d)
            sum += static_cast<double>(encoded_size_bits(ie_encode(random_matrix({256, 512}, ec, rng))));
        EXPECT_NEAR(sum / draws / bound_ie_bits(t, ec), 1.0, 0.01) << "ec=" << ec;
    }
}

TEST(RleBound, TinyLayer) {
    EXPECT_EQ(bound_rle_bits(tiny_layer(), 0.25), 256U);
    EXPECT_EQ(bound_rle_bits(tiny_layer(), 0.25, RleBoundVariant::pigeonhole), 256U);
}

TEST(RleBound, PublishedMeasuredCrSitsBelowBound) {
    const auto t = topology_preset("2l-mlp");
    const double cr = compression_rate(fp_model_size_bits(t), static_cast<double>(bound_rle_bits(t, 0.05)),
                                       uncompressed_fp_bits(t));
    EXPECT_NEAR(cr, 112.04, 0.01);
    EXPECT_LE(87.0, cr);
    EXPECT_GE(87.0 / cr, 0.7);
}

TEST(RleBound, NeedsTwoOnesPerLayer) {
    EXPECT_THROW(bound_rle_bits(tiny_layer(), 0.05), DomainError);
    EXPECT_NO_THROW(bound_rle_bits(tiny_layer(), 2.0 / 32.0));
    const auto r = predict_bounds(tiny_layer(), 0.05);
    EXPECT_FALSE(r.bound_rle_bits.has_value());
    EXPECT_NE(r.rle_bound_error.find("layer 0"), std::string::npos);
}

TEST(RleBound, FloorOfDecimalProducts) {
    EXPECT_EQ(detail::floor_product(0.1, 30), 3U);
    EXPECT_EQ(detail::floor_product(0.7, 10), 7U);
    EXPECT_EQ(detail::floor_product(0.25, 10), 2U);
}

TEST(RleBound, NeverAboveMeasuredRle) {
    std::mt19937_64 rng(22);
    for (double ec : {0.01, 0.05, 0.1, 0.25}) {
        const auto w = random_matrix({128, 1024}, ec, rng);
        const double exact = static_cast<double>(w.popcount_total()) / static_cast<double>(w.size());
        EXPECT_LE(bound_rle_bits(topology_preset("tensor:128x1024"), exact),
                  encoded_size_bits(rle_encode(w)))
            << "ec=" << ec;
    }
}

TEST(CompressionRate, NeMlpIsThirtyTwo) {
    std::mt19937_64 rng(23);
    const auto t = topology_preset("2l-mlp");
    std::vector<EncodedLayer> enc;
    for (const auto& l : t.layers) enc.push_back(ne_encode(random_matrix(l.dims, 0.5, rng)));
    const double cr = measured_cr(t, enc, Codec::NE);
    EXPECT_LE(cr, 32.0);
    EXPECT_NEAR(cr, 32.0, 0.5);
}

TEST(CompressionRate, DecreasesWithEc) {
    const auto t = topology_preset("2l-mlp");
    double prev_ie = std::numeric_limits<double>::infinity(), prev_rle = prev_ie;
    for (double ec : {0.01, 0.02, 0.05, 0.1, 0.25, 0.5}) {
        const auto r = predict_bounds(t, ec);
        EXPECT_LT(r.bound_ie_cr, prev_ie);
        EXPECT_LE(*r.bound_rle_cr, prev_rle);
        prev_ie = r.bound_ie_cr;
        prev_rle = *r.bound_rle_cr;
    }
}

TEST(CompressionRate, WrongLayerCountThrows) {
    std::mt19937_64 rng(24);
    const std::vector<EncodedLayer> enc{ne_encode(random_matrix({4, 8}, 0.5, rng))};
    EXPECT_THROW(measured_cr(topology_preset("mlp:8-4-2"), enc, Codec::NE), SizeError);
}

TEST(ValidateBounds, ReportsEveryCodecAndRatios) {
    std::mt19937_64 rng(25);
    const auto t = topology_preset("mlp:256-512-10");
    std::vector<PackedBitMatrix> w;
    for (const auto& l : t.layers) w.push_back(random_matrix(l.dims, 0.05, rng));
    const auto r = validate_bounds(t, w);
    EXPECT_EQ(r.measured.size(), 4U);
    EXPECT_NEAR(r.ec, 0.05, 0.005);
    EXPECT_NEAR(r.ratios.at("ie"), 1.0, 0.05);
    EXPECT_LE(r.ratios.at("rle"), 1.0);
    EXPECT_GT(r.ratios.at("rle"), 0.7);
    EXPECT_EQ(r.layer_fractions.size(), 2U);
    const auto kv = to_key_value(r);
    EXPECT_NE(kv.find("measured_he_cr="), std::string::npos);
    EXPECT_NE(kv.find("ratio_ie="), std::string::npos);
    EXPECT_NE(to_table(r).find("RLE bound"), std::string::npos);
}

TEST(ValidateBounds, ShapeMismatchThrows) {
    std::mt19937_64 rng(26);
    const std::vector<PackedBitMatrix> w{random_matrix({4, 8}, 0.5, rng)};
    EXPECT_THROW(validate_bounds(topology_preset("tensor:8x4"), w), SizeError);
}
