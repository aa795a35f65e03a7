#include "scaforge/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "scaforge/binary_io.hpp"
#include "scaforge/errors.hpp"

namespace scaforge {

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

void log_softmax(std::span<double> v) {
    const double lse = log_sum_exp(v);
    for (auto& x : v) x -= lse;
}

LogProbMatrix::LogProbMatrix(Matrix log_probs, double tolerance) : values_(std::move(log_probs)) {
    if (values_.cols() != kNumClasses)
        throw DimensionError("log-probability rows must have 256 entries, got " + std::to_string(values_.cols()));
    for (std::size_t i = 0; i < values_.rows(); ++i) {
        auto r = values_.row(i);
        if (!std::all_of(r.begin(), r.end(), [](double x) { return std::isfinite(x); }))
            throw std::invalid_argument("non-finite log-probability in row " + std::to_string(i));
        if (std::abs(log_sum_exp(r)) > tolerance)
            throw std::invalid_argument("row " + std::to_string(i) + " is not normalized");
    }
}

LogProbMatrix LogProbMatrix::from_scores(Matrix scores) {
    for (std::size_t i = 0; i < scores.rows(); ++i) log_softmax(scores.row(i));
    return LogProbMatrix(std::move(scores));
}

LogProbMatrix LogProbMatrix::subset(std::span<const std::size_t> indices) const {
    LogProbMatrix out;
    out.values_ = values_.gather_rows(indices);
    return out;
}

std::vector<std::uint8_t> encode_logprobs(const LogProbMatrix& probs) {
    io::ByteWriter w;
    w.magic("SCLP");
    w.put<std::uint16_t>(1);
    w.put<std::uint64_t>(probs.rows());
    w.put<std::uint16_t>(static_cast<std::uint16_t>(kNumClasses));
    w.put_all(probs.values().values());
    return w.take();
}

LogProbMatrix decode_logprobs(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SCLP");
    const auto version = r.get<std::uint16_t>();
    if (version != 1) throw FormatError(FormatErrc::unsupported_version, "SCLP version " + std::to_string(version));
    const auto n = r.get<std::uint64_t>();
    const auto classes = r.get<std::uint16_t>();
    if (classes != kNumClasses)
        throw FormatError(FormatErrc::length_mismatch, "SCLP class count " + std::to_string(classes));
    if (n > r.remaining() / (kNumClasses * sizeof(double)))
        throw FormatError(FormatErrc::truncated, "SCLP payload shorter than declared");
    const auto rows = static_cast<std::size_t>(n);
    auto data = r.get_vector<double>(rows * kNumClasses);
    r.expect_end();
    try {
        return LogProbMatrix(Matrix(rows, kNumClasses, std::move(data)));
    } catch (const std::invalid_argument& e) {
        throw FormatError(FormatErrc::value_out_of_range, e.what());
    }
}

void save_logprobs(const LogProbMatrix& probs, const std::filesystem::path& path) {
    io::write_file(path, encode_logprobs(probs));
}

LogProbMatrix load_logprobs(const std::filesystem::path& path) { return decode_logprobs(io::read_file(path)); }

}  // namespace scaforge
