#include "scaforge/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace scaforge {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

aes::Block16 random_block(std::mt19937_64& rng) {
    aes::Block16 b;
    for (auto& v : b) v = static_cast<std::uint8_t>(rng() & 0xff);
    return b;
}

}  // namespace

void SimConfig::validate() const {
    if (trace_len == 0) throw std::invalid_argument("trace_len must be positive");
    leak_points.validate(trace_len);
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("noise_sigma must be >= 0");
    if (!std::isfinite(amplitude)) throw std::invalid_argument("amplitude must be finite");
    if (!std::isfinite(baseline)) throw std::invalid_argument("baseline must be finite");
}

double leak_value(LeakModel model, std::uint8_t label) {
    return model == LeakModel::hamming_weight ? static_cast<double>(aes::hamming_weight(label))
                                              : static_cast<double>(label) / 255.0;
}

TraceSet simulate(const SimConfig& cfg, std::size_t n) {
    cfg.validate();
    if (n == 0) throw std::invalid_argument("cannot simulate zero traces");

    TraceSet set;
    set.samples = Matrix(n, cfg.trace_len);
    set.plaintexts.resize(n);
    set.keys.emplace(n);
    set.labels.emplace(n);
    set.byte_index = cfg.byte_index;
    set.source_dtype = SampleType::f32;

    std::vector<bool> is_leak(cfg.trace_len, false);
    for (auto p : cfg.leak_points.indices) is_leak[p] = true;
    const auto b = static_cast<std::size_t>(cfg.byte_index.value());

    for (std::size_t i = 0; i < n; ++i) {
        std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(i)));
        std::normal_distribution<double> noise(0.0, 1.0);

        set.plaintexts[i] = random_block(rng);
        (*set.keys)[i] = cfg.key_mode == KeyMode::fixed ? cfg.key : random_block(rng);
        const auto label = aes::sbox_label(set.plaintexts[i][b], (*set.keys)[i][b]);
        (*set.labels)[i] = label;

        const double signal = cfg.amplitude * leak_value(cfg.leak_model, label);
        auto row = set.samples.row(i);
        for (std::size_t t = 0; t < cfg.trace_len; ++t) {
            double v = cfg.baseline + cfg.noise_sigma * noise(rng);
            if (is_leak[t]) v += signal;
            row[t] = static_cast<double>(static_cast<float>(v));
        }
    }
    return set;
}

std::vector<double> estimate_snr(const TraceSet& set) {
    if (!set.labels) throw std::invalid_argument("SNR estimation needs labels");
    const auto& labels = *set.labels;
    const std::size_t n = set.size();
    const std::size_t l = set.trace_len();

    std::vector<std::size_t> count(256, 0);
    for (auto y : labels) ++count[y];

    std::vector<double> sum(256 * l, 0.0);
    std::vector<double> sumsq(256 * l, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = set.samples.row(i);
        double* s = &sum[labels[i] * l];
        for (std::size_t t = 0; t < l; ++t) s[t] += row[t];
    }
    // Within-class spread is accumulated around the class mean, not raw moments.
    for (std::size_t i = 0; i < n; ++i) {
        auto row = set.samples.row(i);
        const auto y = labels[i];
        const double inv = 1.0 / static_cast<double>(count[y]);
        double* s = &sum[y * l];
        double* q = &sumsq[y * l];
        for (std::size_t t = 0; t < l; ++t) {
            const double d = row[t] - s[t] * inv;
            q[t] += d * d;
        }
    }

    std::vector<double> snr(l, 0.0);
    std::size_t classes = 0;
    for (std::size_t c = 0; c < 256; ++c)
        if (count[c] >= 2) ++classes;
    if (classes == 0) return snr;

    for (std::size_t t = 0; t < l; ++t) {
        double mean_of_means = 0.0;
        double mean_within = 0.0;
        for (std::size_t c = 0; c < 256; ++c) {
            if (count[c] < 2) continue;
            const double cn = static_cast<double>(count[c]);
            mean_of_means += sum[c * l + t] / cn;
            mean_within += sumsq[c * l + t] / cn;
        }
        mean_of_means /= static_cast<double>(classes);
        mean_within /= static_cast<double>(classes);
        double signal = 0.0;
        for (std::size_t c = 0; c < 256; ++c) {
            if (count[c] < 2) continue;
            const double d = sum[c * l + t] / static_cast<double>(count[c]) - mean_of_means;
            signal += d * d;
        }
        signal /= static_cast<double>(classes);
        if (mean_within <= 0.0)
            snr[t] = signal > 0.0 ? kSnrCap : 0.0;
        else
            snr[t] = std::min(signal / mean_within, kSnrCap);
    }
    return snr;
}

}  // namespace scaforge
