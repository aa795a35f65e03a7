#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "run_config.hpp"
#include "scaforge/errors.hpp"

namespace scaforge::cli {

int run(int argc, char** argv) {
    CLI::App app{"Profiled side-channel attacks on the AES first-round S-box", "scaforge"};
    app.require_subcommand(1);

    fs::path config, model, traces, out_file;
    std::optional<fs::path> out_dir;
    fs::path required_out;
    std::optional<std::size_t> n_traces;
    std::size_t top_k = 0;
    std::vector<fs::path> inputs;
    RankArgs rank;

    auto* sim = app.add_subcommand("simulate", "Write synthetic profiling and attack trace sets");
    sim->add_option("--config", config, "Run configuration (JSON)")->required();
    sim->add_option("--out", out_dir, "Output directory");

    auto* tr = app.add_subcommand("train", "Fit a model and write its checkpoint");
    tr->add_option("--config", config, "Run configuration (JSON)")->required();
    tr->add_option("--out", out_dir, "Output directory");

    auto* at = app.add_subcommand("attack", "Write per-trace class log-probabilities");
    at->add_option("--model", model, "Checkpoint from train")->required();
    at->add_option("--traces", traces, "Attack traces (SCAT)")->required();
    at->add_option("--out", out_file, "Output log-probability file")->required();
    at->add_option("--n-traces", n_traces, "Use only the first N traces");

    auto* rk = app.add_subcommand("rank", "Key ranking, rank curve and summary");
    rk->add_option("--logprobs", rank.logprobs, "Log-probability file from attack")->required();
    rk->add_option("--traces", rank.traces, "Attack traces (SCAT)")->required();
    rk->add_option("--true-key", rank.true_key, "Key byte, or the full 16-byte key, in hex");
    rk->add_option("--byte-index", rank.byte_index, "Attacked byte (default: from the trace file)");
    rk->add_option("--step", rank.step, "Rank curve step")->capture_default_str();
    rk->add_option("--epsilon", rank.epsilon, "Probability floor in key scores")->capture_default_str();
    rk->add_option("--out", rank.out, "Output directory")->required();

    auto* im = app.add_subcommand("importance", "Gini feature ranking of a random forest");
    im->add_option("--model", model, "Random forest checkpoint")->required();
    im->add_option("--top-k", top_k, "Number of indices in top_k.txt")->required();
    im->add_option("--out", required_out, "Output directory")->required();

    auto* rp = app.add_subcommand("report", "Merge rank summaries into one table");
    rp->add_option("--inputs", inputs, "Directories holding summary.json")->required();
    rp->add_option("--out", out_file, "Output table (.csv or .json)")->required();

    auto* pl = app.add_subcommand("pipeline", "simulate, train, attack and rank in one go");
    pl->add_option("--config", config, "Run configuration (JSON)")->required();
    pl->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "scaforge: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*sim) simulate_command(config, out_dir);
        else if (*tr) train_command(config, out_dir);
        else if (*at) attack_command(model, traces, out_file, n_traces);
        else if (*rk) rank_command(rank);
        else if (*im) importance_command(model, top_k, required_out);
        else if (*rp) report_command(inputs, out_file);
        else if (*pl) pipeline_command(config, out_dir);
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "scaforge: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "scaforge: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace scaforge::cli
