#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scaforge/aes.hpp"
#include "scaforge/classifier.hpp"

namespace scaforge {

struct KeyRankConfig {
    double epsilon = 1e-40;
    void validate() const;
};

/// Summed log-probability per key hypothesis, indexed by key byte.
struct ScoreTable {
    std::array<double, 256> scores{};
};

struct RankPoint {
    std::size_t n_traces;
    int rank;
    friend bool operator==(const RankPoint&, const RankPoint&) = default;
};

struct RankCurve {
    std::vector<RankPoint> points;
};

/// Guessing-entropy style curve: mean rank over random trace orderings.
struct MeanRankPoint {
    std::size_t n_traces;
    double mean_rank;
};

inline constexpr std::size_t kDefaultRankStep = 10;

/// log(exp(log_prob) + epsilon), stable when exp(log_prob) underflows.
double log_prob_plus_epsilon(double log_prob, double log_epsilon);

/// score[k] = sum_i log(P(sbox(pt_i ^ k) | trace_i) + epsilon).
ScoreTable score_keys(const LogProbMatrix& probs, std::span<const std::uint8_t> plaintexts,
                      const KeyRankConfig& cfg = {});
ScoreTable score_keys(const LogProbMatrix& probs, std::span<const aes::Block16> plaintexts,
                      aes::ByteIndex byte_index, const KeyRankConfig& cfg = {});

/// Pessimistic rank: number of other keys scoring at least as high as the true key.
int true_key_rank(const ScoreTable& scores, std::uint8_t true_key);

/// Rank after each prefix of step, 2*step, ... traces; the last point is always N.
RankCurve rank_curve(const LogProbMatrix& probs, std::span<const std::uint8_t> plaintexts, std::uint8_t true_key,
                     std::size_t step = kDefaultRankStep, const KeyRankConfig& cfg = {});

std::vector<MeanRankPoint> mean_rank_curve(const LogProbMatrix& probs, std::span<const std::uint8_t> plaintexts,
                                           std::uint8_t true_key, std::size_t step, std::size_t repeats,
                                           std::uint64_t seed, const KeyRankConfig& cfg = {});

/// Smallest curve point from which the rank stays 0 to the end.
std::optional<std::size_t> traces_to_rank0(const RankCurve& curve);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const LogProbMatrix& probs, std::span<const std::uint8_t> labels);

std::string scores_to_csv(const ScoreTable& scores);
std::string scores_to_json(const ScoreTable& scores);
std::string curve_to_csv(const RankCurve& curve);
std::string curve_to_json(const RankCurve& curve);

}  // namespace scaforge
