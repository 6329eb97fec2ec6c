#include <sbnn/data.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace sbnn;
namespace fs = std::filesystem;

namespace {

class IdxFiles : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("sbnn_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    void write_split(const std::string& prefix, std::size_t count, std::uint32_t side = 4) {
        std::vector<std::uint8_t> pixels(count * side * side);
        for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 37);
        std::vector<std::uint8_t> labels(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
        write_idx(dir_ / (prefix + "-images-idx3-ubyte"), dir_ / (prefix + "-labels-idx1-ubyte"), pixels, labels,
                  side, side);
    }

    std::vector<std::uint8_t> read(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    void overwrite(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }

    fs::path dir_;
};

}  // namespace

TEST_F(IdxFiles, LoadsAndScalesPixels) {
    write_split("train", 12);
    write_split("t10k", 5);
    const auto p = load_mnist(dir_, false);
    EXPECT_EQ(p.train.size(), 12U);
    EXPECT_EQ(p.test.size(), 5U);
    EXPECT_EQ(p.train.dim, 16U);
    EXPECT_EQ(p.test.split, Split::test);
    EXPECT_FLOAT_EQ(p.train.images[0], -1.0F);
    EXPECT_FLOAT_EQ(p.train.images[1], 37.0F / 127.5F - 1.0F);
    EXPECT_EQ(p.train.labels[11], 1);
    EXPECT_EQ(p.train.sample(1).size(), 16U);
    for (float v : p.train.images) {
        EXPECT_GE(v, -1.0F);
        EXPECT_LE(v, 1.0F);
    }
}

TEST_F(IdxFiles, CanonicalSplitIsEnforced) {
    write_split("train", 12);
    write_split("t10k", 5);
    EXPECT_THROW(load_mnist(dir_), DataError);
}

TEST_F(IdxFiles, MissingDirectory) { EXPECT_THROW(load_mnist(dir_ / "absent", false), DataError); }

TEST_F(IdxFiles, TruncatedImages) {
    write_split("train", 12);
    write_split("t10k", 5);
    auto bytes = read(dir_ / "train-images-idx3-ubyte");
    bytes.resize(bytes.size() - 7);
    overwrite(dir_ / "train-images-idx3-ubyte", bytes);
    EXPECT_THROW(load_mnist(dir_, false), DataError);
    bytes.resize(10);
    overwrite(dir_ / "train-images-idx3-ubyte", bytes);
    EXPECT_THROW(load_mnist(dir_, false), DataError);
}

TEST_F(IdxFiles, BadMagic) {
    write_split("train", 12);
    write_split("t10k", 5);
    auto bytes = read(dir_ / "t10k-labels-idx1-ubyte");
    bytes[3] = 0x03;
    overwrite(dir_ / "t10k-labels-idx1-ubyte", bytes);
    EXPECT_THROW(load_mnist(dir_, false), DataError);
}

TEST_F(IdxFiles, LabelOutOfRange) {
    write_split("train", 12);
    write_split("t10k", 5);
    auto bytes = read(dir_ / "train-labels-idx1-ubyte");
    bytes[8 + 4] = 10;
    overwrite(dir_ / "train-labels-idx1-ubyte", bytes);
    try {
        load_mnist(dir_, false);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("index 4"), std::string::npos);
    }
}

TEST_F(IdxFiles, CountMismatch) {
    write_split("train", 12);
    write_split("t10k", 5);
    std::vector<std::uint8_t> labels(11, 0);
    std::vector<std::uint8_t> pixels(12 * 16, 0);
    write_idx(dir_ / "train-images-idx3-ubyte", dir_ / "train-labels-idx1-ubyte", pixels, labels, 4, 4);
    EXPECT_THROW(load_mnist(dir_, false), DataError);
}

TEST_F(IdxFiles, ImageSizeMismatchAcrossSplits) {
    write_split("train", 12, 4);
    write_split("t10k", 5, 3);
    EXPECT_THROW(load_mnist(dir_, false), DataError);
}

TEST(ParseIdx, EmptyButValidFiles) {
    const std::vector<std::uint8_t> img{0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 28, 0, 0, 0, 28};
    const std::vector<std::uint8_t> lab{0, 0, 8, 1, 0, 0, 0, 0};
    EXPECT_EQ(parse_idx_images(img).count, 0U);
    EXPECT_TRUE(parse_idx_labels(lab).empty());
}
