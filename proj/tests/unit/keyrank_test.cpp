#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "scaforge/aes.hpp"
#include "scaforge/errors.hpp"
#include "scaforge/keyrank.hpp"

namespace scaforge {
namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

// Puts probability `hit` on the label of the true key and spreads the rest.
LogProbMatrix peaked(std::span<const std::uint8_t> pts, std::uint8_t key, double hit) {
    Matrix p(pts.size(), 256, (1.0 - hit) / 255.0);
    for (std::size_t i = 0; i < pts.size(); ++i) p(i, aes::sbox_label(pts[i], key)) = hit;
    return oracle::to_log(p);
}

TEST(KeyRank, MatchesNaiveScoring) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix probs = oracle::random_prob_rows(30, seed);
        const auto pts = random_bytes(30, seed + 100);
        const auto got = score_keys(oracle::to_log(probs), pts);
        const auto want = oracle::naive_scores(probs, pts, 1e-40);
        for (std::size_t k = 0; k < 256; ++k) EXPECT_NEAR(got.scores[k], want[k], 1e-9 * std::abs(want[k]));
    }
}

TEST(KeyRank, EpsilonTermHandlesUnderflow) {
    const double le = std::log(1e-40);
    EXPECT_NEAR(log_prob_plus_epsilon(std::log(0.5), le), std::log(0.5 + 1e-40), 1e-15);
    EXPECT_NEAR(log_prob_plus_epsilon(-1e6, le), le, 1e-12);
    EXPECT_NEAR(log_prob_plus_epsilon(-std::numeric_limits<double>::infinity(), le), le, 1e-12);
    EXPECT_NEAR(log_prob_plus_epsilon(le, le), le + std::log(2.0), 1e-12);
}

TEST(KeyRank, BlockOverloadUsesByteIndex) {
    const std::size_t n = 12;
    std::vector<aes::Block16> blocks(n);
    std::vector<std::uint8_t> col(n);
    const auto raw = random_bytes(n * 16, 3);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(raw.begin() + i * 16, 16, blocks[i].begin());
        col[i] = blocks[i][5];
    }
    const auto lp = oracle::to_log(oracle::random_prob_rows(n, 4));
    EXPECT_EQ(score_keys(lp, blocks, aes::ByteIndex(5)).scores, score_keys(lp, col).scores);
}

TEST(KeyRank, RankIsPessimisticOnTies) {
    ScoreTable s;
    s.scores.fill(0.0);
    EXPECT_EQ(true_key_rank(s, 9), 255);
    s.scores[9] = 1.0;
    EXPECT_EQ(true_key_rank(s, 9), 0);
    s.scores[200] = 1.0;
    EXPECT_EQ(true_key_rank(s, 9), 1);
    s.scores[3] = 2.0;
    EXPECT_EQ(true_key_rank(s, 9), 2);
}

TEST(KeyRank, PerfectPredictionsReachRankZero) {
    const auto pts = random_bytes(50, 5);
    const auto lp = peaked(pts, 0x3C, 0.9);
    const auto curve = rank_curve(lp, pts, 0x3C, 10);
    ASSERT_EQ(curve.points.size(), 5u);
    for (const auto& p : curve.points) EXPECT_EQ(p.rank, 0);
    EXPECT_EQ(traces_to_rank0(curve), 10u);
    EXPECT_GT(true_key_rank(score_keys(lp, pts), 0x3D), 0);
}

TEST(KeyRank, UniformPredictionsLeaveEveryKeyTied) {
    const auto pts = random_bytes(20, 6);
    const auto lp = LogProbMatrix(Matrix(20, 256, std::log(1.0 / 256)));
    const auto s = score_keys(lp, pts);
    for (double v : s.scores) EXPECT_DOUBLE_EQ(v, s.scores[0]);
    EXPECT_EQ(true_key_rank(s, 17), 255);
    EXPECT_FALSE(traces_to_rank0(rank_curve(lp, pts, 17, 5)).has_value());
}

TEST(KeyRank, CurveMatchesPrefixScoring) {
    const auto probs = oracle::random_prob_rows(37, 7);
    const auto pts = random_bytes(37, 8);
    const auto lp = oracle::to_log(probs);
    const auto curve = rank_curve(lp, pts, 0x42, 10);
    std::vector<std::size_t> ns;
    for (const auto& p : curve.points) {
        ns.push_back(p.n_traces);
        std::vector<std::size_t> idx(p.n_traces);
        std::iota(idx.begin(), idx.end(), 0);
        const auto prefix = score_keys(lp.subset(idx), std::span(pts).first(p.n_traces));
        EXPECT_EQ(p.rank, true_key_rank(prefix, 0x42));
    }
    EXPECT_EQ(ns, (std::vector<std::size_t>{10, 20, 30, 37}));
    EXPECT_THROW(rank_curve(lp, pts, 0x42, 0), std::invalid_argument);
}

TEST(KeyRank, TracesToRankZeroNeedsRankToHold) {
    RankCurve c;
    c.points = {{10, 3}, {20, 0}, {30, 2}, {40, 0}, {50, 0}};
    EXPECT_EQ(traces_to_rank0(c), 40u);
    c.points.back().rank = 1;
    EXPECT_FALSE(traces_to_rank0(c).has_value());
    EXPECT_FALSE(traces_to_rank0(RankCurve{}).has_value());
}

TEST(KeyRank, AccuracyTiesGoToLowestIndex) {
    Matrix p(3, 256, 1.0);
    p(0, 4) = 100.0;
    p(0, 9) = 100.0;
    p(1, 2) = 100.0;
    p(2, 255) = 100.0;
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (double v : p.row(i)) s += v;
        for (auto& v : p.row(i)) v /= s;
    }
    const auto lp = oracle::to_log(p);
    const std::vector<std::uint8_t> y = {4, 2, 0};
    EXPECT_NEAR(accuracy(lp, y), 2.0 / 3.0, 1e-15);
    const std::vector<std::uint8_t> y9 = {9, 2, 0};
    EXPECT_NEAR(accuracy(lp, y9), 1.0 / 3.0, 1e-15);
}

TEST(KeyRank, MeanCurveAveragesOrderings) {
    const auto pts = random_bytes(40, 9);
    const auto lp = peaked(pts, 7, 0.9);
    const auto mean = mean_rank_curve(lp, pts, 7, 10, 5, 1);
    ASSERT_EQ(mean.size(), 4u);
    for (const auto& p : mean) EXPECT_EQ(p.mean_rank, 0.0);
}

TEST(KeyRank, Serialization) {
    ScoreTable s;
    for (std::size_t k = 0; k < 256; ++k) s.scores[k] = -static_cast<double>(k) / 3.0;
    const auto csv = scores_to_csv(s);
    EXPECT_EQ(csv.substr(0, 10), "key,score\n");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 257);
    const auto js = nlohmann::json::parse(scores_to_json(s));
    EXPECT_EQ(js.size(), 256u);

    RankCurve c;
    c.points = {{10, 5}, {15, 0}};
    EXPECT_EQ(curve_to_csv(c), "n_traces,rank\n10,5\n15,0\n");
    const auto cj = nlohmann::json::parse(curve_to_json(c));
    EXPECT_EQ(cj.size(), 2u);
}

TEST(KeyRank, RejectsMismatchedInputs) {
    const auto lp = oracle::to_log(oracle::random_prob_rows(4, 1));
    EXPECT_THROW(score_keys(lp, random_bytes(5, 1)), DimensionError);
    KeyRankConfig bad;
    bad.epsilon = 0.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace scaforge
