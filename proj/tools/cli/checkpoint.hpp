#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "run_config.hpp"
#include "scaforge/classifier.hpp"
#include "scaforge/trace_set.hpp"

namespace scaforge::cli {

/// Trained model plus the preprocessing that produced its inputs.
/// Stored as "SCPK": magic, u16 version, u8 kind, u32 raw trace length,
/// u32 selected-feature count (0 = all) and indices, u8 scaler flag with
/// means and deviations, u64 model length, then the model's own container.
struct Checkpoint {
    ModelKind kind = ModelKind::template_attack;
    std::size_t trace_len = 0;
    std::optional<FeatureIndexList> features;
    std::optional<Scaler> scaler;
    std::vector<std::uint8_t> model_bytes;

    std::size_t n_features() const { return features ? features->size() : trace_len; }
    /// Feature selection followed by standardization.
    Matrix prepare(const Matrix& raw) const;
    /// Original trace column of each model input.
    std::size_t source_column(std::size_t model_feature) const;
    std::unique_ptr<ProbClassifier> load_classifier() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scaforge::cli
