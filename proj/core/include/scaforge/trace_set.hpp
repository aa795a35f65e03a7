#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "scaforge/aes.hpp"
#include "scaforge/matrix.hpp"

namespace scaforge {

/// On-disk sample encoding of a trace container.
enum class SampleType : std::uint8_t { f32 = 1, i8 = 2, i16 = 3 };

std::size_t sample_size(SampleType type);

/// N traces x L samples with per-trace metadata. Samples are always held
/// as doubles; `source_dtype` records how they are stored on disk.
struct TraceSet {
    Matrix samples;
    std::vector<aes::Block16> plaintexts;
    std::optional<std::vector<aes::Block16>> keys;
    std::optional<std::vector<std::uint8_t>> labels;
    aes::ByteIndex byte_index;
    SampleType source_dtype = SampleType::f32;

    std::size_t size() const { return samples.rows(); }
    std::size_t trace_len() const { return samples.cols(); }

    /// Plaintext byte at `byte_index` for every trace.
    std::vector<std::uint8_t> target_plaintexts() const;

    /// Throws FormatError on shape inconsistencies or labels that disagree
    /// with sbox(plaintext ^ key) at the byte index.
    void validate() const;
};

/// Per-column standardization fitted on a profiling set.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Ordered, duplicate-free column selection.
struct FeatureIndexList {
    std::vector<std::size_t> indices;

    std::size_t size() const { return indices.size(); }
    /// Throws std::out_of_range / std::invalid_argument against trace length.
    void validate(std::size_t trace_len) const;
};

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

inline constexpr double kStdGuard = 1e-12;

Scaler fit_scaler(const TraceSet& profiling);
Scaler fit_scaler(const Matrix& samples);
TraceSet apply_scaler(const Scaler& scaler, const TraceSet& set);
Matrix apply_scaler(const Scaler& scaler, const Matrix& samples);

TraceSet select_features(const TraceSet& set, const FeatureIndexList& features);
Matrix select_features(const Matrix& samples, const FeatureIndexList& features);

/// Subset of traces in the given order, metadata included.
TraceSet select_traces(const TraceSet& set, std::span<const std::size_t> rows);

/// Seeded k-fold partition of 0..n-1. Validation fold sizes differ by at most one.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Native "SCAT" container.
std::vector<std::uint8_t> encode_native(const TraceSet& set);
TraceSet decode_native(std::span<const std::uint8_t> bytes);
void save_native(const TraceSet& set, const std::filesystem::path& path);
TraceSet load_native(const std::filesystem::path& path);

}  // namespace scaforge
