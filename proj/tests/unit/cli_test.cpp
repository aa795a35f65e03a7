#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli/checkpoint.hpp"
#include "cli/commands.hpp"
#include "cli/run_config.hpp"
#include "scaforge/classifier.hpp"
#include "scaforge/errors.hpp"

namespace scaforge::cli {
namespace {

using nlohmann::json;

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("scaforge_cli_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

json base_config() {
    return json::parse(R"({
      "dataset": {"simulator": {"trace_len": 40, "leak_points": [5, 17, 33], "noise_sigma": 0.5,
                                 "key": "000102030405060708090a0b0c0d0e0f", "seed": 4,
                                 "n_profiling": 2000, "n_attack": 200}},
      "preprocessing": {"standardize": true},
      "model": {"kind": "template"},
      "attack": {"step": 5}
    })");
}

fs::path write_json(const fs::path& dir, const json& j, const std::string& name = "run.json") {
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

int invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "scaforge");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TEST(RunConfig, ParsesDefaultsAndSections) {
    const auto cfg = parse_run_config(base_config(), "/base");
    ASSERT_TRUE(cfg.dataset.simulator);
    EXPECT_EQ(cfg.dataset.simulator->sim.trace_len, 40u);
    EXPECT_EQ(cfg.dataset.simulator->sim.key[15], 0x0f);
    EXPECT_EQ(cfg.dataset.simulator->attack_config().key_mode, KeyMode::fixed);
    EXPECT_EQ(cfg.model.kind, ModelKind::template_attack);
    EXPECT_EQ(cfg.attack.step, 5u);
    EXPECT_FALSE(cfg.attack.true_key);

    json j = base_config();
    j["dataset"] = {{"path", "data"}};
    j["output"] = {{"directory", "out"}};
    const auto c2 = parse_run_config(j, "/base");
    EXPECT_EQ(*c2.dataset.path, fs::path("/base/data"));
    EXPECT_EQ(*c2.output_directory, fs::path("/base/out"));
}

TEST(RunConfig, RejectsMalformedSections) {
    auto expect_usage = [](const json& j) { EXPECT_THROW(parse_run_config(j, "."), UsageError) << j.dump(); };
    json j = base_config();
    j["extra"] = 1;
    expect_usage(j);
    j = base_config();
    j["model"]["kind"] = "svm";
    expect_usage(j);
    j = base_config();
    j["dataset"]["path"] = "x";
    expect_usage(j);
    j = base_config();
    j["dataset"]["simulator"]["noise_sigma"] = "loud";
    expect_usage(j);
    j = base_config();
    j["dataset"]["simulator"]["leak_points"] = {5, 99};
    expect_usage(j);
    j = base_config();
    j["model"]["forest"] = {{"n_trees", 0}};
    expect_usage(j);
    j = base_config();
    j["model"]["net"] = {{"kernel", 4}};
    expect_usage(j);
    j = base_config();
    j["preprocessing"]["top_k"] = 3;
    j["preprocessing"]["feature_file"] = "f.txt";
    expect_usage(j);
    j = base_config();
    j["attack"]["true_key"] = "zz";
    expect_usage(j);
    j = base_config();
    j["model"]["train"] = {{"lr", -1.0}};
    expect_usage(j);
}

TEST(RunConfig, SeedOverrideReachesEverySeed) {
    auto cfg = parse_run_config(base_config(), ".");
    apply_seed_override(cfg, 77);
    EXPECT_EQ(cfg.dataset.simulator->sim.seed, 77u);
    EXPECT_EQ(cfg.model.forest.seed, 77u);
    EXPECT_EQ(cfg.model.train.seed, 77u);
}

TEST(RunConfig, HexAndFeatureLists) {
    EXPECT_EQ(parse_hex_byte("e0"), 0xE0);
    EXPECT_EQ(parse_hex_byte("0x7"), 0x07);
    EXPECT_THROW(parse_hex_byte("100"), UsageError);
    EXPECT_THROW(parse_hex_block("00"), UsageError);
    const auto f = parse_feature_list("3, 1\n# comment\n 7 9 # tail\n");
    EXPECT_EQ(f.indices, (std::vector<std::size_t>{3, 1, 7, 9}));
    EXPECT_EQ(parse_feature_list(format_feature_list(f)).indices, f.indices);
    EXPECT_THROW(parse_feature_list("1 -2"), DataError);
    EXPECT_THROW(parse_feature_list("# nothing"), DataError);
}

TEST(Checkpoint, RoundTripAndPreparation) {
    Checkpoint c;
    c.kind = ModelKind::rf;
    c.trace_len = 5;
    c.features = FeatureIndexList{{4, 1}};
    c.scaler = Scaler{{1.0, 2.0}, {2.0, 4.0}};
    c.model_bytes = {1, 2, 3};
    const auto bytes = encode_checkpoint(c);
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(back.source_column(0), 4u);

    const Matrix raw(1, 5, {0, 10, 0, 0, 5});
    const Matrix x = back.prepare(raw);
    EXPECT_DOUBLE_EQ(x(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(x(0, 1), 2.0);
    EXPECT_THROW(back.prepare(Matrix(1, 4)), DimensionError);

    auto cut = bytes;
    cut.pop_back();
    EXPECT_THROW(decode_checkpoint(cut), FormatError);
}

TEST(Commands, PipelineRecoversKeyAndIsDeterministic) {
    TempDir tmp;
    const auto cfg = write_json(tmp.path(), base_config());
    ASSERT_EQ(invoke({"pipeline", "--config", cfg.string(), "--out", (tmp.path() / "a").string()}), 0);
    ASSERT_EQ(invoke({"pipeline", "--config", cfg.string(), "--out", (tmp.path() / "b").string()}), 0);
    const auto summary = json::parse(slurp(tmp.path() / "a" / "summary.json"));
    EXPECT_FALSE(summary["traces_to_rank0"].is_null());
    EXPECT_EQ(summary["true_key"], "02");
    for (const auto& e : fs::directory_iterator(tmp.path() / "a")) {
        const auto name = e.path().filename();
        if (name == "run.log") continue;
        EXPECT_EQ(slurp(e.path()), slurp(tmp.path() / "b" / name)) << name;
    }
}

TEST(Commands, StepwiseMatchesPipeline) {
    TempDir tmp;
    const fs::path d = tmp.path();
    const auto cfg = write_json(d, base_config());
    ASSERT_EQ(invoke({"pipeline", "--config", cfg.string(), "--out", (d / "p").string()}), 0);
    ASSERT_EQ(invoke({"simulate", "--config", cfg.string(), "--out", (d / "s").string()}), 0);
    json with_path = base_config();
    with_path["dataset"] = {{"path", "s"}};
    const auto cfg2 = write_json(d, with_path, "path.json");
    ASSERT_EQ(invoke({"train", "--config", cfg2.string(), "--out", (d / "t").string()}), 0);
    ASSERT_EQ(invoke({"attack", "--model", (d / "t" / "model.scpk").string(), "--traces",
                      (d / "s" / "attack.scat").string(), "--out", (d / "lp.sclp").string()}),
              0);
    ASSERT_EQ(invoke({"rank", "--logprobs", (d / "lp.sclp").string(), "--traces", (d / "s" / "attack.scat").string(),
                      "--true-key", "000102030405060708090a0b0c0d0e0f", "--byte-index", "2", "--step", "5", "--out",
                      (d / "r").string()}),
              0);
    EXPECT_EQ(slurp(d / "s" / "attack.scat"), slurp(d / "p" / "attack.scat"));
    EXPECT_EQ(slurp(d / "t" / "model.scpk"), slurp(d / "p" / "model.scpk"));
    EXPECT_EQ(slurp(d / "lp.sclp"), slurp(d / "p" / "attack.sclp"));
    for (const char* f : {"rank_curve.csv", "scores.csv", "summary.json"})
        EXPECT_EQ(slurp(d / "r" / f), slurp(d / "p" / f)) << f;
}

TEST(Commands, WrongKeyDoesNotReachRankZero) {
    TempDir tmp;
    const fs::path d = tmp.path();
    ASSERT_EQ(invoke({"pipeline", "--config", write_json(d, base_config()).string(), "--out", (d / "p").string()}), 0);
    ASSERT_EQ(invoke({"rank", "--logprobs", (d / "p" / "attack.sclp").string(), "--traces",
                      (d / "p" / "attack.scat").string(), "--true-key", "03", "--out", (d / "w").string()}),
              0);
    const auto s = json::parse(slurp(d / "w" / "summary.json"));
    EXPECT_GT(s["final_rank"].get<int>(), 0);
    EXPECT_TRUE(s["traces_to_rank0"].is_null());

    ASSERT_EQ(invoke({"report", "--inputs", (d / "p").string(), (d / "w").string(), "--out", (d / "rep.csv").string()}),
              0);
    std::istringstream rep(slurp(d / "rep.csv"));
    std::string header, first, second;
    std::getline(rep, header);
    std::getline(rep, first);
    std::getline(rep, second);
    EXPECT_EQ(header, "run,model,features,traces_to_rank0,final_rank,accuracy");
    EXPECT_EQ(first.rfind("p,template,40,", 0), 0u);
    EXPECT_EQ(second.rfind("w,template,40,,", 0), 0u);
}

TEST(Commands, ForestImportanceAndTopKFeatureFile) {
    TempDir tmp;
    const fs::path d = tmp.path();
    json j = base_config();
    j["model"] = {{"kind", "rf"}, {"forest", {{"n_trees", 10}, {"min_samples_leaf", 5}}}};
    ASSERT_EQ(invoke({"train", "--config", write_json(d, j).string(), "--out", (d / "rf").string()}), 0);
    EXPECT_TRUE(fs::exists(d / "rf" / "importance.csv"));
    ASSERT_EQ(invoke({"importance", "--model", (d / "rf" / "model.scpk").string(), "--top-k", "3", "--out",
                      (d / "imp").string()}),
              0);
    auto top = parse_feature_list(slurp(d / "imp" / "top_k.txt")).indices;
    std::sort(top.begin(), top.end());
    EXPECT_EQ(top, (std::vector<std::size_t>{5, 17, 33}));

    json t = base_config();
    t["preprocessing"]["feature_file"] = (d / "imp" / "top_k.txt").string();
    ASSERT_EQ(invoke({"pipeline", "--config", write_json(d, t, "t.json").string(), "--out", (d / "t").string()}), 0);
    EXPECT_EQ(json::parse(slurp(d / "t" / "summary.json"))["features"], 3);

    EXPECT_EQ(invoke({"importance", "--model", (d / "t" / "model.scpk").string(), "--top-k", "1", "--out",
                      (d / "x").string()}),
              2);
}

TEST(Commands, NetworkTrainingWritesHistory) {
    TempDir tmp;
    json j = base_config();
    j["dataset"]["simulator"]["trace_len"] = 32;
    j["dataset"]["simulator"]["leak_points"] = {3, 20};
    j["dataset"]["simulator"]["n_profiling"] = 100;
    j["model"] = {{"kind", "resnet"},
                  {"net", {{"channels", {4, 4}}, {"kernel", 3}, {"dense_hidden", 8}}},
                  {"train", {{"epochs", 2}, {"batch_size", 50}, {"lr", 1e-3}}}};
    ASSERT_EQ(invoke({"pipeline", "--config", write_json(tmp.path(), j).string(), "--out",
                      (tmp.path() / "n").string()}),
              0);
    std::istringstream hist(slurp(tmp.path() / "n" / "train_history.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(hist, line)) ++lines;
    EXPECT_EQ(lines, 3u);
    EXPECT_EQ(json::parse(slurp(tmp.path() / "n" / "summary.json"))["model"], "resnet");
}

TEST(Commands, ExitCodes) {
    TempDir tmp;
    const fs::path d = tmp.path();
    std::ofstream(d / "broken.json") << "{ not json";
    EXPECT_EQ(invoke({"train", "--config", (d / "broken.json").string(), "--out", (d / "o1").string()}), 1);
    EXPECT_FALSE(fs::exists(d / "o1"));

    json j = base_config();
    j["model"]["kind"] = "svm";
    EXPECT_EQ(invoke({"train", "--config", write_json(d, j).string(), "--out", (d / "o2").string()}), 1);
    EXPECT_FALSE(fs::exists(d / "o2"));

    EXPECT_EQ(invoke({"train", "--config", (d / "missing.json").string(), "--out", (d / "o3").string()}), 2);
    EXPECT_EQ(invoke({"train", "--bogus-flag"}), 1);
    EXPECT_EQ(invoke({}), 1);
    EXPECT_EQ(invoke({"attack", "--model", (d / "none.scpk").string(), "--traces", "x", "--out", "y"}), 2);

    json p = base_config();
    p["dataset"] = {{"path", "nowhere"}};
    EXPECT_EQ(invoke({"train", "--config", write_json(d, p, "p.json").string(), "--out", (d / "o4").string()}), 2);
    EXPECT_FALSE(fs::exists(d / "o4"));
    EXPECT_EQ(invoke({"report", "--inputs", (d / "nowhere").string(), "--out", (d / "r.csv").string()}), 2);
}

TEST(Commands, EnvironmentSeedOverride) {
    TempDir tmp;
    const auto cfg = write_json(tmp.path(), base_config());
    ::setenv("SCAFORGE_SEED", "123", 1);
    const int rc = invoke({"simulate", "--config", cfg.string(), "--out", (tmp.path() / "env").string()});
    ::unsetenv("SCAFORGE_SEED");
    ASSERT_EQ(rc, 0);
    json j = base_config();
    j["dataset"]["simulator"]["seed"] = 123;
    ASSERT_EQ(invoke({"simulate", "--config", write_json(tmp.path(), j, "s.json").string(), "--out",
                      (tmp.path() / "cfg").string()}),
              0);
    EXPECT_EQ(slurp(tmp.path() / "env" / "profiling.scat"), slurp(tmp.path() / "cfg" / "profiling.scat"));

    ::setenv("SCAFORGE_SEED", "abc", 1);
    EXPECT_EQ(invoke({"simulate", "--config", cfg.string(), "--out", (tmp.path() / "bad").string()}), 1);
    ::unsetenv("SCAFORGE_SEED");
}

}  // namespace
}  // namespace scaforge::cli
