#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scaforge/keyrank.hpp"
#include "scaforge/neural_net.hpp"
#include "scaforge/random_forest.hpp"
#include "scaforge/simulator.hpp"

namespace scaforge::cli {

/// Bad flags or a malformed config. Maps to exit status 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or unreadable inputs, or data the models reject. Maps to exit status 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModelKind : std::uint8_t { template_attack = 0, rf = 1, cnn = 2, resnet = 3 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct SimulatorSection {
    SimConfig sim;
    std::size_t n_profiling = 5000;
    std::size_t n_attack = 1000;

    /// The attack set always uses the configured key in fixed mode.
    SimConfig attack_config() const;
};

struct DatasetSection {
    std::optional<std::filesystem::path> path;  // directory holding profiling.scat and attack.scat
    std::optional<SimulatorSection> simulator;
};

struct PreprocessingSection {
    bool standardize = true;
    std::optional<std::filesystem::path> feature_file;
    std::optional<std::size_t> top_k;
};

struct NetSection {
    std::vector<std::size_t> channels = {8, 16, 16, 32};
    std::size_t kernel = 11;
    std::size_t dense_hidden = 128;
    double dropout_p = 0.5;
    bool batch_norm = true;

    nn::NetConfig to_net_config(std::size_t trace_len, bool residual) const;
};

struct ModelSection {
    ModelKind kind = ModelKind::template_attack;
    ForestConfig forest;
    NetSection net;
    nn::TrainConfig train;
};

struct AttackSection {
    std::optional<std::size_t> n_traces;
    std::size_t step = kDefaultRankStep;
    double epsilon = 1e-40;
    std::optional<std::uint8_t> true_key;
};

struct RunConfig {
    DatasetSection dataset;
    PreprocessingSection preprocessing;
    ModelSection model;
    AttackSection attack;
    std::optional<std::filesystem::path> output_directory;
};

/// Strict: unknown keys, wrong types, and invalid values raise UsageError.
/// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);

/// SCAFORGE_SEED, when set, replaces every seed in the config.
std::optional<std::uint64_t> seed_from_env();
void apply_seed_override(RunConfig& cfg, std::uint64_t seed);

std::uint8_t parse_hex_byte(const std::string& s);
aes::Block16 parse_hex_block(const std::string& s);

/// Integers separated by whitespace or commas; '#' starts a comment.
FeatureIndexList parse_feature_list(const std::string& text);
std::string format_feature_list(const FeatureIndexList& features);

}  // namespace scaforge::cli
