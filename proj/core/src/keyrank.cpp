#include "scaforge/keyrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "scaforge/errors.hpp"

namespace scaforge {
namespace {

void check_inputs(const LogProbMatrix& probs, std::size_t n_plaintexts) {
    if (probs.rows() != n_plaintexts)
        throw DimensionError("probability rows (" + std::to_string(probs.rows()) + ") and plaintexts (" +
                             std::to_string(n_plaintexts) + ") differ in length");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void accumulate_trace(std::array<double, 256>& acc, std::span<const double> row, std::uint8_t plaintext,
                      double log_eps) {
    for (int k = 0; k < 256; ++k)
        acc[k] += log_prob_plus_epsilon(row[aes::sbox_label(plaintext, static_cast<std::uint8_t>(k))], log_eps);
}

}  // namespace

void KeyRankConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be positive");
}

double log_prob_plus_epsilon(double log_prob, double log_epsilon) {
    const double hi = std::max(log_prob, log_epsilon);
    const double lo = std::min(log_prob, log_epsilon);
    return hi + std::log1p(std::exp(lo - hi));
}

ScoreTable score_keys(const LogProbMatrix& probs, std::span<const std::uint8_t> plaintexts, const KeyRankConfig& cfg) {
    cfg.validate();
    check_inputs(probs, plaintexts.size());
    if (plaintexts.empty()) throw std::invalid_argument("no traces to score");
    const double log_eps = std::log(cfg.epsilon);
    ScoreTable t;
    for (std::size_t i = 0; i < plaintexts.size(); ++i) accumulate_trace(t.scores, probs.row(i), plaintexts[i], log_eps);
    return t;
}

ScoreTable score_keys(const LogProbMatrix& probs, std::span<const aes::Block16> plaintexts, aes::ByteIndex byte_index,
                      const KeyRankConfig& cfg) {
    std::vector<std::uint8_t> bytes(plaintexts.size());
    for (std::size_t i = 0; i < plaintexts.size(); ++i)
        bytes[i] = plaintexts[i][static_cast<std::size_t>(byte_index.value())];
    return score_keys(probs, bytes, cfg);
}

int true_key_rank(const ScoreTable& scores, std::uint8_t true_key) {
    const double target = scores.scores[true_key];
    int rank = 0;
    for (int k = 0; k < 256; ++k)
        if (k != true_key && scores.scores[k] >= target) ++rank;
    return rank;
}

RankCurve rank_curve(const LogProbMatrix& probs, std::span<const std::uint8_t> plaintexts, std::uint8_t true_key,
                     std::size_t step, const KeyRankConfig& cfg) {
    cfg.validate();
    check_inputs(probs, plaintexts.size());
    if (plaintexts.empty()) throw std::invalid_argument("rank curve needs at least one trace");
    if (step < 1) throw std::invalid_argument("step must be >= 1");

    const double log_eps = std::log(cfg.epsilon);
    const std::size_t n = plaintexts.size();
    ScoreTable acc;
    RankCurve curve;
    for (std::size_t i = 0; i < n; ++i) {
        accumulate_trace(acc.scores, probs.row(i), plaintexts[i], log_eps);
        const std::size_t seen = i + 1;
        if (seen % step == 0 || seen == n) curve.points.push_back({seen, true_key_rank(acc, true_key)});
    }
    return curve;
}

std::vector<MeanRankPoint> mean_rank_curve(const LogProbMatrix& probs, std::span<const std::uint8_t> plaintexts,
                                           std::uint8_t true_key, std::size_t step, std::size_t repeats,
                                           std::uint64_t seed, const KeyRankConfig& cfg) {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    check_inputs(probs, plaintexts.size());
    std::vector<std::size_t> order(plaintexts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);

    std::vector<MeanRankPoint> mean;
    std::vector<std::uint8_t> shuffled_pts(plaintexts.size());
    for (std::size_t r = 0; r < repeats; ++r) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < order.size(); ++i) shuffled_pts[i] = plaintexts[order[i]];
        const auto curve = rank_curve(probs.subset(order), shuffled_pts, true_key, step, cfg);
        if (mean.empty())
            for (const auto& p : curve.points) mean.push_back({p.n_traces, 0.0});
        for (std::size_t i = 0; i < curve.points.size(); ++i) mean[i].mean_rank += curve.points[i].rank;
    }
    for (auto& p : mean) p.mean_rank /= static_cast<double>(repeats);
    return mean;
}

std::optional<std::size_t> traces_to_rank0(const RankCurve& curve) {
    std::optional<std::size_t> first;
    for (const auto& p : curve.points) {
        if (p.rank != 0)
            first.reset();
        else if (!first)
            first = p.n_traces;
    }
    return first;
}

double accuracy(const LogProbMatrix& probs, std::span<const std::uint8_t> labels) {
    if (probs.rows() != labels.size()) throw DimensionError("probability rows and labels differ in length");
    if (labels.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto r = probs.row(i);
        const auto arg = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
        if (arg == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::string scores_to_csv(const ScoreTable& scores) {
    std::string out = "key,score\n";
    for (int k = 0; k < 256; ++k) out += std::to_string(k) + "," + format_double(scores.scores[k]) + "\n";
    return out;
}

std::string scores_to_json(const ScoreTable& scores) {
    nlohmann::json j = nlohmann::json::array();
    for (int k = 0; k < 256; ++k) j.push_back({{"key", k}, {"score", scores.scores[k]}});
    return j.dump(2) + "\n";
}

std::string curve_to_csv(const RankCurve& curve) {
    std::string out = "n_traces,rank\n";
    for (const auto& p : curve.points) out += std::to_string(p.n_traces) + "," + std::to_string(p.rank) + "\n";
    return out;
}

std::string curve_to_json(const RankCurve& curve) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : curve.points) j.push_back({{"n_traces", p.n_traces}, {"rank", p.rank}});
    return j.dump(2) + "\n";
}

}  // namespace scaforge
