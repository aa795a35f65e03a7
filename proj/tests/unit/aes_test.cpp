#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "scaforge/aes.hpp"

namespace scaforge {
namespace {

TEST(Aes, TablesMatchFieldArithmeticOracle) {
    for (int x = 0; x < 256; ++x) {
        const auto b = static_cast<std::uint8_t>(x);
        EXPECT_EQ(aes::sbox(b), oracle::sbox(b)) << "x=" << x;
    }
    EXPECT_TRUE(aes::tables_verified());
}

TEST(Aes, SpotValues) {
    EXPECT_EQ(aes::sbox(0x00), 0x63);
    EXPECT_EQ(aes::sbox(0x53), 0xED);
    EXPECT_EQ(aes::inv_sbox(0x63), 0x00);
    EXPECT_EQ(aes::sbox_label(0x00, 0x00), 0x63);
}

TEST(Aes, SboxIsPermutationAndInverseRoundTrips) {
    std::vector<int> image;
    for (int x = 0; x < 256; ++x) {
        const auto b = static_cast<std::uint8_t>(x);
        image.push_back(aes::sbox(b));
        EXPECT_EQ(aes::inv_sbox(aes::sbox(b)), b);
        EXPECT_EQ(aes::sbox(aes::inv_sbox(b)), b);
    }
    std::sort(image.begin(), image.end());
    for (int x = 0; x < 256; ++x) EXPECT_EQ(image[x], x);
}

TEST(Aes, EqualPlaintextAndKeyGiveSboxOfZero) {
    for (int v = 0; v < 256; ++v) {
        const auto b = static_cast<std::uint8_t>(v);
        EXPECT_EQ(aes::sbox_label(b, b), 0x63);
    }
}

TEST(Aes, LabelIsInjectiveInKey) {
    for (int pt = 0; pt < 256; pt += 17) {
        std::vector<bool> seen(256, false);
        for (int k = 0; k < 256; ++k) {
            const auto y = aes::sbox_label(static_cast<std::uint8_t>(pt), static_cast<std::uint8_t>(k));
            EXPECT_FALSE(seen[y]);
            seen[y] = true;
        }
    }
}

TEST(Aes, HammingWeight) {
    EXPECT_EQ(aes::hamming_weight(0x00), 0);
    EXPECT_EQ(aes::hamming_weight(0xFF), 8);
    EXPECT_EQ(aes::hamming_weight(0xA5), 4);
    double mean = 0, sq = 0;
    for (int x = 0; x < 256; ++x) {
        const int hw = aes::hamming_weight(static_cast<std::uint8_t>(x));
        EXPECT_EQ(hw, oracle::bit_count(static_cast<std::uint8_t>(x)));
        mean += hw;
        sq += hw * hw;
    }
    mean /= 256;
    EXPECT_DOUBLE_EQ(mean, 4.0);
    EXPECT_DOUBLE_EQ(sq / 256 - mean * mean, 2.0);
}

TEST(Aes, HypothesisLabelsMatchLoop) {
    std::mt19937_64 rng(3);
    std::vector<std::uint8_t> pts(100);
    for (auto& p : pts) p = static_cast<std::uint8_t>(rng());
    const auto k = static_cast<std::uint8_t>(rng());
    const auto got = aes::hypothesis_labels(pts, k);
    ASSERT_EQ(got.size(), pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        EXPECT_EQ(got[i], oracle::sbox(static_cast<std::uint8_t>(pts[i] ^ k)));

    const std::uint8_t one[] = {0x42};
    EXPECT_EQ(aes::hypothesis_labels(one, 0x17)[0], aes::sbox_label(0x42, 0x17));
}

TEST(Aes, ByteIndexRange) {
    EXPECT_EQ(aes::ByteIndex(2).value(), 2);
    EXPECT_NO_THROW(aes::ByteIndex(15));
    EXPECT_THROW(aes::ByteIndex(16), std::out_of_range);
    EXPECT_THROW(aes::ByteIndex(-1), std::out_of_range);
}

}  // namespace
}  // namespace scaforge
