#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "scaforge/errors.hpp"
#include "scaforge/trace_set.hpp"

namespace scaforge {
namespace {

TraceSet random_set(std::size_t n, std::size_t l, std::uint64_t seed, SampleType dtype = SampleType::f32) {
    std::mt19937_64 rng(seed);
    TraceSet s;
    s.samples = Matrix(n, l);
    for (auto& v : s.samples.values()) {
        switch (dtype) {
        case SampleType::f32: v = static_cast<float>(std::normal_distribution<double>(0, 3)(rng)); break;
        case SampleType::i8: v = static_cast<std::int8_t>(rng()); break;
        case SampleType::i16: v = static_cast<std::int16_t>(rng()); break;
        }
    }
    s.source_dtype = dtype;
    s.byte_index = aes::ByteIndex(2);
    s.plaintexts.resize(n);
    s.keys.emplace(n);
    s.labels.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& b : s.plaintexts[i]) b = static_cast<std::uint8_t>(rng());
        for (auto& b : (*s.keys)[i]) b = static_cast<std::uint8_t>(rng());
        (*s.labels)[i] = aes::sbox_label(s.plaintexts[i][2], (*s.keys)[i][2]);
    }
    return s;
}

FormatErrc decode_error(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_native(bytes);
    } catch (const FormatError& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected a FormatError";
    return FormatErrc::io_error;
}

// Two traces of two i16 samples, keys and labels present, byte index 0.
std::vector<std::uint8_t> hand_fixture() {
    std::vector<std::uint8_t> b = {
        'S', 'C', 'A', 'T',
        0x01, 0x00,                                      // version
        0x03, 0x00,                                      // flags: keys | labels
        0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // n_traces
        0x02, 0x00, 0x00, 0x00,                          // trace_len
        0x03,                                            // dtype i16
        0x00,                                            // byte index
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00,              // reserved
        0x01, 0x00, 0xFE, 0xFF,                          // trace 0: 1, -2
        0x2C, 0x01, 0x00, 0x00,                          // trace 1: 300, 0
    };
    std::vector<std::uint8_t> pt0(16, 0x00), pt1(16, 0x00);
    pt1[0] = 0x10;
    b.insert(b.end(), pt0.begin(), pt0.end());
    b.insert(b.end(), pt1.begin(), pt1.end());
    std::vector<std::uint8_t> keys(32, 0x00);
    b.insert(b.end(), keys.begin(), keys.end());
    b.push_back(0x63);  // sbox(0x00)
    b.push_back(0xCA);  // sbox(0x10)
    return b;
}

TEST(NativeFormat, HandAssembledFixtureParses) {
    const auto set = decode_native(hand_fixture());
    ASSERT_EQ(set.size(), 2u);
    ASSERT_EQ(set.trace_len(), 2u);
    EXPECT_EQ(set.source_dtype, SampleType::i16);
    EXPECT_EQ(set.byte_index.value(), 0);
    EXPECT_EQ(set.samples(0, 0), 1.0);
    EXPECT_EQ(set.samples(0, 1), -2.0);
    EXPECT_EQ(set.samples(1, 0), 300.0);
    EXPECT_EQ(set.samples(1, 1), 0.0);
    EXPECT_EQ(set.plaintexts[1][0], 0x10);
    ASSERT_TRUE(set.labels && set.keys);
    EXPECT_EQ((*set.labels)[0], 0x63);
    EXPECT_EQ((*set.labels)[1], 0xCA);
    EXPECT_EQ(encode_native(set), hand_fixture());
}

TEST(NativeFormat, RoundTripEveryDtype) {
    for (auto dtype : {SampleType::f32, SampleType::i8, SampleType::i16}) {
        const auto set = random_set(3, 5, 11 + static_cast<int>(dtype), dtype);
        const auto bytes = encode_native(set);
        const auto back = decode_native(bytes);
        EXPECT_EQ(back.samples, set.samples);
        EXPECT_EQ(back.plaintexts, set.plaintexts);
        EXPECT_EQ(back.keys, set.keys);
        EXPECT_EQ(back.labels, set.labels);
        EXPECT_EQ(back.source_dtype, dtype);
        EXPECT_EQ(encode_native(back), bytes);
    }
}

TEST(NativeFormat, OptionalMetadataOmitted) {
    auto set = random_set(4, 3, 5);
    set.keys.reset();
    set.labels.reset();
    const auto back = decode_native(encode_native(set));
    EXPECT_FALSE(back.keys.has_value());
    EXPECT_FALSE(back.labels.has_value());
    EXPECT_EQ(back.plaintexts, set.plaintexts);
}

TEST(NativeFormat, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "scaforge_trace_store_test.scat";
    const auto set = random_set(3, 5, 7);
    save_native(set, path);
    const auto back = load_native(path);
    EXPECT_EQ(back.samples, set.samples);
    std::filesystem::remove(path);
    EXPECT_THROW(load_native(path), FormatError);
}

TEST(NativeFormat, DistinctErrors) {
    auto bytes = hand_fixture();
    auto bad = bytes;
    bad[0] = bad[1] = bad[2] = bad[3] = 'X';
    EXPECT_EQ(decode_error(bad), FormatErrc::bad_magic);

    bad = bytes;
    bad[4] = 2;
    EXPECT_EQ(decode_error(bad), FormatErrc::unsupported_version);

    bad = bytes;
    bad[20] = 9;
    EXPECT_EQ(decode_error(bad), FormatErrc::unsupported_dtype);

    bad = bytes;
    bad[6] = 0x07;
    EXPECT_EQ(decode_error(bad), FormatErrc::bad_flags);

    bad = bytes;
    bad.resize(bad.size() - 1);
    EXPECT_EQ(decode_error(bad), FormatErrc::truncated);

    bad = bytes;
    bad.push_back(0);
    EXPECT_EQ(decode_error(bad), FormatErrc::length_mismatch);

    bad = bytes;
    bad.back() ^= 1;
    EXPECT_EQ(decode_error(bad), FormatErrc::label_mismatch);

    EXPECT_EQ(decode_error({'S', 'C'}), FormatErrc::bad_magic);
}

TEST(NativeFormat, IntegerDtypeRejectsUnrepresentableSamples) {
    auto set = random_set(2, 2, 1, SampleType::i8);
    set.samples(0, 0) = 0.5;
    EXPECT_THROW(encode_native(set), FormatError);
    set.samples(0, 0) = 200;
    EXPECT_THROW(encode_native(set), FormatError);
}

TEST(Scaler, TwoPointColumn) {
    const Matrix m(2, 1, {0.0, 2.0});
    const auto s = fit_scaler(m);
    EXPECT_DOUBLE_EQ(s.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(s.stddev[0], 1.0);
}

TEST(Scaler, ConstantColumnGuard) {
    const Matrix m(3, 1, {5.0, 5.0, 5.0});
    const auto s = fit_scaler(m);
    EXPECT_DOUBLE_EQ(s.mean[0], 5.0);
    EXPECT_DOUBLE_EQ(s.stddev[0], 1.0);
    const auto t = apply_scaler(s, m);
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Scaler, TransformedColumnsAreStandard) {
    Matrix m = oracle::random_matrix(100, 10, 42, 3.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += static_cast<double>(j) * 7.0;
    const auto t = apply_scaler(fit_scaler(m), m);
    for (std::size_t j = 0; j < t.cols(); ++j) {
        double mean = 0, sq = 0;
        for (std::size_t i = 0; i < t.rows(); ++i) mean += t(i, j);
        mean /= 100;
        for (std::size_t i = 0; i < t.rows(); ++i) sq += (t(i, j) - mean) * (t(i, j) - mean);
        EXPECT_LT(std::abs(mean), 1e-9);
        EXPECT_LT(std::abs(std::sqrt(sq / 100) - 1.0), 1e-6);
    }
}

TEST(Scaler, IdentityScaler) {
    const Matrix m = oracle::random_matrix(4, 3, 1);
    const Scaler id{{0, 0, 0}, {1, 1, 1}};
    EXPECT_EQ(apply_scaler(id, m), m);
}

TEST(Scaler, AttackSetKeepsItsOwnOffset) {
    const Matrix profiling = oracle::random_matrix(2000, 4, 8);
    Matrix attack = oracle::random_matrix(2000, 4, 9);
    for (auto& v : attack.values()) v += 1.0;
    const auto t = apply_scaler(fit_scaler(profiling), attack);
    for (std::size_t j = 0; j < t.cols(); ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < t.rows(); ++i) mean += t(i, j);
        mean /= static_cast<double>(t.rows());
        EXPECT_GT(mean, 0.8);
    }
}

TEST(Scaler, DimensionMismatch) {
    const Scaler s{{0, 0}, {1, 1}};
    EXPECT_THROW(apply_scaler(s, Matrix(2, 3)), DimensionError);
}

TEST(SelectFeatures, ReordersColumnsAndKeepsMetadata) {
    auto set = random_set(1, 3, 4);
    const double a = set.samples(0, 0), c = set.samples(0, 2);
    const auto out = select_features(set, FeatureIndexList{{2, 0}});
    ASSERT_EQ(out.trace_len(), 2u);
    EXPECT_EQ(out.samples(0, 0), c);
    EXPECT_EQ(out.samples(0, 1), a);
    EXPECT_EQ(out.plaintexts, set.plaintexts);
    EXPECT_EQ(out.labels, set.labels);

    const auto all = select_features(set, FeatureIndexList{{0, 1, 2}});
    EXPECT_EQ(all.samples, set.samples);
}

TEST(SelectFeatures, CompositionProperty) {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = oracle::random_matrix(5, 12, rng());
        std::vector<std::size_t> perm(12);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        FeatureIndexList a{{perm.begin(), perm.begin() + 8}};
        std::vector<std::size_t> p2(8);
        std::iota(p2.begin(), p2.end(), 0);
        std::shuffle(p2.begin(), p2.end(), rng);
        FeatureIndexList b{{p2.begin(), p2.begin() + 5}};
        FeatureIndexList ab;
        for (auto i : b.indices) ab.indices.push_back(a.indices[i]);
        EXPECT_EQ(select_features(select_features(x, a), b), select_features(x, ab));
    }
}

TEST(SelectFeatures, RejectsBadIndices) {
    const Matrix x(2, 3);
    EXPECT_THROW(select_features(x, FeatureIndexList{{3}}), std::out_of_range);
    EXPECT_THROW(select_features(x, FeatureIndexList{{1, 1}}), std::invalid_argument);
}

TEST(KFold, SingletonFolds) {
    const auto folds = kfold_split(10, 10, 1);
    ASSERT_EQ(folds.size(), 10u);
    for (const auto& f : folds) {
        EXPECT_EQ(f.validation.size(), 1u);
        EXPECT_EQ(f.train.size(), 9u);
    }
}

TEST(KFold, PartitionAndBalance) {
    for (std::size_t n : {7u, 23u, 100u}) {
        for (std::size_t k : {2u, 3u, 7u}) {
            const auto folds = kfold_split(n, k, n * 31 + k);
            std::set<std::size_t> all;
            std::size_t lo = n, hi = 0, total = 0;
            for (const auto& f : folds) {
                total += f.validation.size();
                all.insert(f.validation.begin(), f.validation.end());
                lo = std::min(lo, f.validation.size());
                hi = std::max(hi, f.validation.size());
                EXPECT_EQ(f.train.size() + f.validation.size(), n);
            }
            EXPECT_EQ(total, n);
            EXPECT_EQ(all.size(), n);
            EXPECT_LE(hi - lo, 1u);
        }
    }
}

TEST(KFold, Determinism) {
    const auto a = kfold_split(100, 5, 9);
    const auto b = kfold_split(100, 5, 9);
    const auto c = kfold_split(100, 5, 10);
    for (std::size_t f = 0; f < 5; ++f) EXPECT_EQ(a[f].validation, b[f].validation);
    EXPECT_NE(a[0].validation, c[0].validation);
}

TEST(KFold, RangeErrors) {
    EXPECT_THROW(kfold_split(5, 1, 0), std::invalid_argument);
    EXPECT_THROW(kfold_split(5, 6, 0), std::invalid_argument);
}

}  // namespace
}  // namespace scaforge
