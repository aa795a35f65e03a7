#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's code paths so that agreement means something.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "scaforge/classifier.hpp"
#include "scaforge/matrix.hpp"

namespace scaforge::oracle {

// AES S-box from first principles: inverse in GF(2^8) followed by the affine map.
inline std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
    std::uint8_t p = 0;
    for (int i = 0; i < 8; ++i) {
        if (b & 1) p ^= a;
        const bool hi = a & 0x80;
        a = static_cast<std::uint8_t>(a << 1);
        if (hi) a ^= 0x1b;
        b >>= 1;
    }
    return p;
}

inline std::uint8_t gf_inverse(std::uint8_t a) {
    if (a == 0) return 0;
    for (int b = 1; b < 256; ++b)
        if (gf_mul(a, static_cast<std::uint8_t>(b)) == 1) return static_cast<std::uint8_t>(b);
    return 0;
}

inline std::uint8_t sbox(std::uint8_t x) {
    const std::uint8_t b = gf_inverse(x);
    auto rotl = [](std::uint8_t v, int s) { return static_cast<std::uint8_t>((v << s) | (v >> (8 - s))); };
    return static_cast<std::uint8_t>(b ^ rotl(b, 1) ^ rotl(b, 2) ^ rotl(b, 3) ^ rotl(b, 4) ^ 0x63);
}

inline int bit_count(std::uint8_t x) {
    int c = 0;
    for (int i = 0; i < 8; ++i) c += (x >> i) & 1;
    return c;
}

// Literal double loop over the SLP definition: log(P + eps) summed over traces.
inline std::array<double, 256> naive_scores(const Matrix& probs, std::span<const std::uint8_t> pts, double eps) {
    std::array<double, 256> out{};
    for (int k = 0; k < 256; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto z = sbox(static_cast<std::uint8_t>(pts[i] ^ k));
            s += std::log(probs(i, z) + eps);
        }
        out[k] = s;
    }
    return out;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double sigma = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sigma);
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = d(rng);
    return m;
}

// Random rows of probabilities (not logs) summing to one.
inline Matrix random_prob_rows(std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> d(1.0);
    Matrix m(rows, kNumClasses);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (auto& v : m.row(i)) s += (v = d(rng));
        for (auto& v : m.row(i)) v /= s;
    }
    return m;
}

inline LogProbMatrix to_log(const Matrix& probs) {
    Matrix l = probs;
    for (auto& v : l.values()) v = std::log(v);
    return LogProbMatrix(std::move(l));
}

// Relative error with a small absolute floor so exactly-zero gradients
// (e.g. a bias feeding batch norm) compare against round-off, not 0/0.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

}  // namespace scaforge::oracle
