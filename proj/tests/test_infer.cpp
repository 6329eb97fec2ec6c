#include "test_support.hpp"

#include <sbnn/infer.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace sbnn;
using sbnn::testing::random_input;
using sbnn::testing::random_matrix;
using sbnn::testing::random_model;

namespace {

BitVector bits_of(const std::string& s) {
    BitVector v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v.set(i, s[i] == '1');
    return v;
}

BitActivations random_activations(std::size_t n, std::mt19937_64& rng) {
    BitActivations x(n);
    for (std::size_t i = 0; i < n; ++i) x.set(i, rng() & 1);
    return x;
}

int naive_dot(const BitVector& row, const BitActivations& x) {
    int s = 0;
    for (std::size_t i = 0; i < row.size(); ++i)
        if (row.get(i)) s += x.get(i) ? 1 : -1;
    return s;
}

BatchNorm single_bn(float gamma, float beta, double mean, double var) {
    BatchNorm bn = BatchNorm::identity(1);
    bn.gamma[0] = gamma;
    bn.beta[0] = beta;
    bn.mean[0] = mean;
    bn.var[0] = var;
    return bn;
}

}  // namespace

TEST(PopcountDot, Example) {
    const std::vector<int> x{+1, -1, +1, +1};
    EXPECT_EQ(popcount_dot(bits_of("1011"), to_bits(x)), 3);
}

TEST(PopcountDot, EmptyRowIsZero) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) EXPECT_EQ(popcount_dot(BitVector(77), random_activations(77, rng)), 0);
}

TEST(PopcountDot, MatchesNaiveOracle) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 1000; ++t) {
        const auto row = random_activations(257, rng);
        const auto x = random_activations(257, rng);
        ASSERT_EQ(popcount_dot(row, x), naive_dot(row, x));
    }
}

TEST(PopcountDot, LengthMismatchThrows) {
    EXPECT_THROW(popcount_dot(BitVector(10), BitActivations(11)), SizeError);
}

TEST(PopcountDot, PartitionIdentity) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 1 + rng() % 300;
        const auto row = random_activations(n, rng);
        BitVector complement(n);
        for (std::size_t i = 0; i < n; ++i) complement.set(i, !row.get(i));
        const auto x = random_activations(n, rng);
        ASSERT_EQ(popcount_dot(row, x) + popcount_dot(complement, x), compute_q(x));
    }
}

TEST(ComputeQ, Examples) {
    const std::vector<int> x{+1, -1, +1, +1};
    EXPECT_EQ(compute_q(to_bits(x)), 2);
    EXPECT_EQ(compute_q(BitActivations(13)), -13);
    BitActivations ones(13);
    for (std::size_t i = 0; i < 13; ++i) ones.set(i, true);
    EXPECT_EQ(compute_q(ones), 13);
}

TEST(FuseThreshold, IdentityBatchnormIsPureSign) {
    const auto bn = single_bn(1.0F, 0.0F, 0.0, 1.0 - 1e-5);
    const auto f = fuse_batchnorm_threshold(bn, AffineBinaryDomain::zero_one(0.0F, 1.0F));
    EXPECT_EQ(f.thresholds[0], 0.0F);
    EXPECT_EQ(f.comparators[0], Comparator::GE);
}

TEST(FuseThreshold, NegativeScaleFlipsComparator) {
    const auto bn = single_bn(-2.0F, 1.0F, 3.0, 4.0 - 1e-5);
    const auto f = fuse_batchnorm_threshold(bn, AffineBinaryDomain::zero_one(0.0F, 0.5F));
    EXPECT_NEAR(f.thresholds[0], 8.0F, 1e-5);
    EXPECT_EQ(f.comparators[0], Comparator::LE);
}

TEST(FuseThreshold, ZeroScaleGivesConstantNeuron) {
    const auto dom = AffineBinaryDomain::zero_one(0.0F, 1.0F);
    EXPECT_EQ(fuse_batchnorm_threshold(single_bn(0.0F, 0.5F, 0, 1), dom).comparators[0], Comparator::AlwaysPositive);
    EXPECT_EQ(fuse_batchnorm_threshold(single_bn(0.0F, 0.0F, 0, 1), dom).comparators[0], Comparator::AlwaysPositive);
    EXPECT_EQ(fuse_batchnorm_threshold(single_bn(0.0F, -0.5F, 0, 1), dom).comparators[0], Comparator::AlwaysNegative);
}

TEST(FuseThreshold, RejectsAntipodalDomain) {
    EXPECT_THROW(fuse_batchnorm_threshold(single_bn(1, 0, 0, 1), AffineBinaryDomain::antipodal(0.0F, 1.0F)),
                 DomainError);
}

TEST(FuseThreshold, DecisionMatchesFloatReference) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<float> u(-3.0F, 3.0F);
    std::uniform_real_distribution<double> var(0.01, 9.0);
    std::uniform_int_distribution<int> zi(-200, 200);
    std::uniform_int_distribution<int> qi(-400, 400);
    int mismatches = 0;
    for (int t = 0; t < 10000; ++t) {
        const float gamma = t % 50 == 0 ? 0.0F : u(rng);
        const auto bn = single_bn(gamma, u(rng), 40.0 * u(rng), var(rng));
        float beta_p = u(rng);
        if (beta_p == 0.0F) beta_p = 1.0F;
        const auto dom = AffineBinaryDomain::zero_one(u(rng), beta_p);
        const auto f = fuse_batchnorm_threshold(bn, dom);
        const int zp = zi(rng);
        const int q = qi(rng);
        const double z = static_cast<double>(beta_p) * zp + static_cast<double>(beta_p) * dom.alpha() * q;
        const bool want = bn.apply(0, z) >= 0.0;
        const double rhs = static_cast<double>(f.thresholds[0]) - static_cast<double>(dom.alpha()) * q;
        mismatches += fires(f.comparators[0], zp, rhs) != want;
    }
    EXPECT_EQ(mismatches, 0);
}

TEST(ForwardFused, MatchesReferencePathOnRandomModels) {
    std::mt19937_64 rng(5);
    for (int m = 0; m < 10; ++m) {
        const auto model = random_model({50, 96, 70, 10}, m % 2 ? 0.1 : 0.5, rng);
        const auto bns = batchnorm_from_model(model);
        for (int t = 0; t < 100; ++t) {
            const auto x = random_input(50, rng);
            const auto fused = forward_fused_trace(model, x);
            const auto ref = forward_reference_trace(model, bns, x);
            ASSERT_EQ(fused.hidden, ref.hidden);
            ASSERT_EQ(argmax(fused.scores), argmax(ref.scores));
            for (std::size_t i = 0; i < fused.scores.size(); ++i)
                ASSERT_NEAR(fused.scores[i], ref.scores[i], 1e-9 * (1.0 + std::abs(ref.scores[i])));
        }
    }
}

TEST(ReferenceModel, BlockOfSamplesEqualsOneAtATime) {
    std::mt19937_64 rng(15);
    const auto model = random_model({33, 48, 20, 10}, 0.2, rng);
    const ReferenceModel ref(model, batchnorm_from_model(model));
    const std::size_t count = 37;
    std::vector<float> inputs;
    for (std::size_t b = 0; b < count; ++b) {
        const auto x = random_input(33, rng);
        inputs.insert(inputs.end(), x.begin(), x.end());
    }
    const auto block = ref.traces(inputs, count);
    ASSERT_EQ(block.size(), count);
    for (std::size_t b = 0; b < count; ++b) {
        const auto one = ref.trace(std::span(inputs).subspan(b * 33, 33));
        EXPECT_EQ(block[b].hidden, one.hidden);
        EXPECT_EQ(block[b].scores, one.scores);
    }
    EXPECT_THROW(ref.traces(inputs, count - 1), SizeError);
}

TEST(ForwardFused, MatchesReferenceWithFusedRealBatchnorm) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> u(-1.0F, 1.0F);
    const std::size_t in = 40, hid = 64, out = 10;
    BatchNorm bn = BatchNorm::identity(hid);
    for (std::size_t i = 0; i < hid; ++i) {
        bn.gamma[i] = i % 9 == 0 ? 0.0F : u(rng);
        bn.beta[i] = u(rng);
        bn.mean[i] = 5.0 * u(rng);
        bn.var[i] = 1.0 + 4.0 * std::abs(u(rng));
    }
    const auto dom = AffineBinaryDomain::zero_one(-0.3F, 0.7F);
    auto fused = fuse_batchnorm_threshold(bn, dom);
    SbnnLayer hidden(random_matrix({hid, in}, 0.3, rng), dom, fused.thresholds, fused.comparators);
    const auto out_layer =
        SbnnLayer::output(random_matrix({out, hid}, 0.3, rng), dom, std::vector<float>(out, 1.0F), std::vector<float>(out, 0.0F));
    const SbnnModel model({hidden, out_layer});
    const std::vector<BatchNorm> bns{batchnorm_at_thresholds(bn, model.layers()[0]),
                                     batchnorm_from_model(model)[1]};
    for (int t = 0; t < 1000; ++t) {
        const auto x = random_input(in, rng);
        const auto f = forward_fused_trace(model, x);
        const auto r = forward_reference_trace(model, bns, x);
        ASSERT_EQ(f.hidden, r.hidden);
        ASSERT_EQ(argmax(f.scores), argmax(r.scores));
    }
}

TEST(ForwardFused, CanonicalDomainEqualsXnorPopcount) {
    std::mt19937_64 rng(7);
    const std::size_t in = 100, hid = 65, out = 10;
    const auto dom = AffineBinaryDomain::zero_one(-0.5F, 2.0F);
    const auto bn = BatchNorm::identity(hid, 0.0);
    const auto f = fuse_batchnorm_threshold(bn, dom);
    const auto w0 = random_matrix({hid, in}, 0.5, rng);
    const auto w1 = random_matrix({out, hid}, 0.5, rng);
    const SbnnModel model({SbnnLayer(w0, dom, f.thresholds, f.comparators),
                           SbnnLayer::output(w1, dom, std::vector<float>(out, 1.0F), std::vector<float>(out, 0.0F))});
    auto xnor_dot = [](const PackedBitMatrix& w, std::size_t r, const BitActivations& x) {
        int agree = 0;
        for (std::size_t c = 0; c < x.size(); ++c) agree += w.get(r, c) == x.get(c);
        return 2 * agree - static_cast<int>(x.size());
    };
    for (int t = 0; t < 200; ++t) {
        BitActivations xb(in);
        std::vector<float> x(in);
        for (std::size_t i = 0; i < in; ++i) {
            xb.set(i, rng() & 1);
            x[i] = xb.get(i) ? 1.0F : -1.0F;
        }
        const auto trace = forward_fused_trace(model, x);
        BitActivations h(hid);
        for (std::size_t r = 0; r < hid; ++r) h.set(r, xnor_dot(w0, r, xb) >= 0);
        ASSERT_EQ(trace.hidden[0], h);
        for (std::size_t r = 0; r < out; ++r) ASSERT_EQ(trace.scores[r], static_cast<double>(xnor_dot(w1, r, h)));
    }
}

TEST(ForwardFused, DimensionMismatchThrows) {
    std::mt19937_64 rng(8);
    const auto model = random_model({12, 8, 3}, 0.5, rng);
    const std::vector<float> x(11, 0.0F);
    EXPECT_THROW(forward_fused(model, x), SizeError);
}

TEST(BinaryOps, GainAtTenPercent) {
    PackedBitMatrix w({100, 100});
    for (std::size_t i = 0; i < 10000; i += 10) w.set(i, true);
    const SbnnModel model({SbnnLayer::output(w, AffineBinaryDomain::zero_one(0, 1), std::vector<float>(100, 1.0F),
                                             std::vector<float>(100, 0.0F))});
    const auto ops = count_binary_ops(model);
    EXPECT_EQ(ops[0].bnn_ops, 20000U);
    EXPECT_EQ(ops[0].sbnn_ops, 1001U);
    EXPECT_NEAR(ops[0].gain, 20.0, 0.05);
}

TEST(BinaryOps, GainAtFullDensity) {
    PackedBitMatrix w({64, 64});
    for (std::size_t i = 0; i < w.size(); ++i) w.set(i, true);
    const SbnnModel model({SbnnLayer::output(w, AffineBinaryDomain::zero_one(0, 1), std::vector<float>(64, 1.0F),
                                             std::vector<float>(64, 0.0F))});
    EXPECT_NEAR(count_binary_ops(model)[0].gain, 2.0, 0.001);
}

TEST(BinaryOps, CountsOnesAndIsMonotone) {
    std::mt19937_64 rng(9);
    double prev = std::numeric_limits<double>::infinity();
    for (double p : {0.01, 0.05, 0.1, 0.3, 0.6, 1.0}) {
        const auto model = random_model({64, 128, 10}, p, rng);
        const auto ops = count_binary_ops(model);
        for (std::size_t l = 0; l < ops.size(); ++l) {
            const auto& w = model.layers()[l].weights();
            std::size_t brute = 0;
            for (std::size_t i = 0; i < w.size(); ++i) brute += w.get(i);
            ASSERT_EQ(ops[l].sbnn_ops, brute + 1);
        }
        EXPECT_LE(ops[0].gain, prev);
        prev = ops[0].gain;
    }
}
