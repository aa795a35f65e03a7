#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scaforge::cli {

namespace fs = std::filesystem;

struct RankArgs {
    fs::path logprobs;
    fs::path traces;
    std::optional<std::string> true_key;  // one byte, or a full 16-byte key
    std::optional<int> byte_index;
    std::size_t step = 10;
    double epsilon = 1e-40;
    fs::path out;
};

// Each command validates its inputs before writing anything and throws
// UsageError or DataError on failure.
void simulate_command(const fs::path& config, const std::optional<fs::path>& out);
void train_command(const fs::path& config, const std::optional<fs::path>& out);
void attack_command(const fs::path& model, const fs::path& traces, const fs::path& out,
                    std::optional<std::size_t> n_traces);
void rank_command(const RankArgs& args);
void importance_command(const fs::path& model, std::size_t top_k, const fs::path& out);
void report_command(const std::vector<fs::path>& inputs, const fs::path& out);
/// simulate (or load) -> train -> attack -> rank into one directory.
void pipeline_command(const fs::path& config, const std::optional<fs::path>& out);

/// Parses argv and runs one subcommand; returns the process exit status.
int run(int argc, char** argv);

}  // namespace scaforge::cli
