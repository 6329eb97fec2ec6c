#include "test_support.hpp"

#include <sbnn/container.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace sbnn;
using sbnn::testing::random_model;

namespace {

const Codec kAllCodecs[] = {Codec::NE, Codec::IE, Codec::RLE, Codec::HE};

}  // namespace

TEST(Container, RoundTripEveryCodec) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto model = random_model({37, 70, 33, 10}, t % 2 ? 0.05 : 0.5, rng);
        for (Codec c : kAllCodecs) {
            const auto bytes = write_container(model, c);
            const auto back = read_container(bytes);
            ASSERT_EQ(back.codec, c);
            ASSERT_EQ(back.model, model);
            ASSERT_EQ(back.encoded.size(), model.layers().size());
        }
    }
}

TEST(Container, HeaderLayout) {
    std::mt19937_64 rng(1);
    const auto model = random_model({8, 4, 2}, 0.5, rng);
    const auto bytes = write_container(model, Codec::IE);
    ASSERT_GT(bytes.size(), 8U);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SBNN");
    EXPECT_EQ(bytes[4], kContainerVersion);
    EXPECT_EQ(bytes[5], 1);
    EXPECT_EQ(bytes[6], 2);  // layer count, little-endian
    EXPECT_EQ(bytes[7], 0);
    EXPECT_EQ(bytes[8], 0);  // first layer is hidden
    EXPECT_EQ(bytes[9], 2);  // two dims
    EXPECT_EQ(bytes[10], 4);
    EXPECT_EQ(bytes[11], 0);
    EXPECT_EQ(bytes[12], 8);
}

TEST(Container, RejectsCorruption) {
    std::mt19937_64 rng(2);
    const auto model = random_model({20, 12, 5}, 0.2, rng);
    const auto bytes = write_container(model, Codec::RLE);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(read_container(bad_magic), CorruptStream);

    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        const std::vector<std::uint8_t> trunc(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(read_container(trunc), CorruptStream) << cut;
    }

    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(read_container(trailing), CorruptStream);

    auto bad_codec = bytes;
    bad_codec[5] = 9;
    EXPECT_THROW(read_container(bad_codec), CorruptStream);
}

TEST(Container, RejectsDimensionsBeyond16Bits) {
    SbnnLayer hidden(PackedBitMatrix({1, 70000}), AffineBinaryDomain::zero_one(0.0F, 1.0F), {0.0F}, {Comparator::GE});
    auto out = SbnnLayer::output(PackedBitMatrix({1, 1}), AffineBinaryDomain::zero_one(0.0F, 1.0F), {1.0F}, {0.0F});
    const SbnnModel model({hidden, out});
    EXPECT_THROW(write_container(model, Codec::NE), SizeError);
}

TEST(Container, FileRoundTrip) {
    std::mt19937_64 rng(3);
    const auto model = random_model({16, 8, 3}, 0.3, rng);
    const auto path = std::filesystem::temp_directory_path() / "sbnn_container_test.sbnn";
    save_container(path, model, Codec::HE);
    EXPECT_EQ(load_container(path).model, model);
    std::filesystem::remove(path);
    EXPECT_THROW(load_container(path), DataError);
}
