#pragma once

#include <cstdint>
#include <vector>

#include "scaforge/aes.hpp"
#include "scaforge/trace_set.hpp"

namespace scaforge {

enum class LeakModel { hamming_weight, value };
enum class KeyMode { fixed, variable };

/// Synthetic leakage source. Leak points carry amplitude * leak(label) on top
/// of baseline plus Gaussian noise; all other samples are pure noise.
struct SimConfig {
    std::size_t trace_len = 700;
    FeatureIndexList leak_points;
    LeakModel leak_model = LeakModel::hamming_weight;
    double amplitude = 1.0;
    double noise_sigma = 1.0;
    double baseline = 0.0;
    KeyMode key_mode = KeyMode::fixed;
    aes::Block16 key{};  // used when key_mode == fixed
    aes::ByteIndex byte_index{2};
    std::uint64_t seed = 0;

    void validate() const;
};

/// Leakage value for a label before amplitude scaling: HW(label), or label/255.
double leak_value(LeakModel model, std::uint8_t label);

/// Deterministic in (cfg.seed, trace index); samples are rounded to f32.
TraceSet simulate(const SimConfig& cfg, std::size_t n);

inline constexpr double kSnrCap = 1e12;

/// Per-sample SNR: variance of class means over the variance-pooled mean
/// within-class variance. Classes with fewer than two traces are ignored.
std::vector<double> estimate_snr(const TraceSet& set);

}  // namespace scaforge
