#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scaforge/matrix.hpp"

namespace scaforge {

inline constexpr std::size_t kNumClasses = 256;

/// N x 256 matrix of per-trace class log-probabilities. Each row
/// log-sum-exps to zero.
class LogProbMatrix {
public:
    LogProbMatrix() = default;

    /// Takes rows that are already normalized. Throws if the width is not
    /// 256, an entry is non-finite, or a row is off by more than `tolerance`.
    explicit LogProbMatrix(Matrix log_probs, double tolerance = 1e-6);

    /// Normalizes arbitrary scores (logits) row-wise with a stable log-softmax.
    static LogProbMatrix from_scores(Matrix scores);

    std::size_t rows() const { return values_.rows(); }
    std::span<const double> row(std::size_t i) const { return values_.row(i); }
    const Matrix& values() const { return values_; }

    /// Rows listed in `indices`, in order.
    LogProbMatrix subset(std::span<const std::size_t> indices) const;

private:
    Matrix values_;
};

double log_sum_exp(std::span<const double> v);

/// In-place stable log-softmax.
void log_softmax(std::span<double> v);

/// Shared contract for every profiled attacker.
class ProbClassifier {
public:
    virtual ~ProbClassifier() = default;

    virtual void fit(const Matrix& samples, std::span<const std::uint8_t> labels) = 0;
    virtual LogProbMatrix predict_log_proba(const Matrix& samples) const = 0;
    virtual std::string name() const = 0;
};

// "SCLP" container: magic, u16 version, u64 rows, u16 classes, f64 row-major.
std::vector<std::uint8_t> encode_logprobs(const LogProbMatrix& probs);
LogProbMatrix decode_logprobs(std::span<const std::uint8_t> bytes);
void save_logprobs(const LogProbMatrix& probs, const std::filesystem::path& path);
LogProbMatrix load_logprobs(const std::filesystem::path& path);

}  // namespace scaforge
