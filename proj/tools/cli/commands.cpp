#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "checkpoint.hpp"
#include "run_config.hpp"
#include "scaforge/errors.hpp"
#include "scaforge/keyrank.hpp"
#include "scaforge/neural_net.hpp"
#include "scaforge/random_forest.hpp"
#include "scaforge/simulator.hpp"
#include "scaforge/template_attack.hpp"

namespace scaforge::cli {

using nlohmann::json;

namespace {

constexpr const char* kProfilingFile = "profiling.scat";
constexpr const char* kAttackFile = "attack.scat";
constexpr const char* kModelFile = "model.scpk";
constexpr const char* kLogprobFile = "attack.sclp";

// The only output that carries wall-clock time.
class RunLog {
public:
    explicit RunLog(const fs::path& dir) : out_(dir / "run.log", std::ios::trunc) {}

    void line(const std::string& msg) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex_byte(std::uint8_t b) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", b);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void make_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

RunConfig load_config(const fs::path& file) {
    RunConfig cfg = load_run_config(file);
    if (auto seed = seed_from_env()) apply_seed_override(cfg, *seed);
    return cfg;
}

fs::path output_dir(const std::optional<fs::path>& flag, const RunConfig& cfg) {
    if (flag) return *flag;
    if (cfg.output_directory) return *cfg.output_directory;
    throw UsageError("no output directory: pass --out or set output.directory");
}

TraceSet load_traces(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing trace file " + path.string());
    return load_native(path);
}

struct Datasets {
    TraceSet profiling;
    TraceSet attack;
};

Datasets obtain_datasets(const RunConfig& cfg) {
    if (cfg.dataset.simulator) {
        const auto& s = *cfg.dataset.simulator;
        return {simulate(s.sim, s.n_profiling), simulate(s.attack_config(), s.n_attack)};
    }
    return {load_traces(*cfg.dataset.path / kProfilingFile), load_traces(*cfg.dataset.path / kAttackFile)};
}

std::vector<std::uint8_t> profiling_labels(const TraceSet& set) {
    if (set.labels) return *set.labels;
    if (!set.keys) throw DataError("profiling traces carry neither labels nor keys");
    std::vector<std::uint8_t> out(set.size());
    const auto b = static_cast<std::size_t>(set.byte_index.value());
    for (std::size_t i = 0; i < set.size(); ++i) out[i] = aes::sbox_label(set.plaintexts[i][b], (*set.keys)[i][b]);
    return out;
}

std::string importance_csv(const FeatureRanking& ranking, const Checkpoint& ckpt) {
    std::string out = "rank,feature,importance\n";
    for (std::size_t r = 0; r < ranking.order.size(); ++r) {
        const auto f = ranking.order.indices[r];
        out += std::to_string(r) + "," + std::to_string(ckpt.source_column(f)) + "," + num(ranking.importances[f]) + "\n";
    }
    return out;
}

struct TrainResult {
    Checkpoint ckpt;
    std::optional<std::string> importance;
    std::optional<std::string> history;
    std::vector<std::string> notes;  // destined for run.log
};

std::uint64_t init_seed(std::uint64_t train_seed) { return train_seed ^ 0x9E3779B97F4A7C15ULL; }

TrainResult train_model(const RunConfig& cfg, const TraceSet& prof) {
    const auto labels = profiling_labels(prof);
    TrainResult res;
    Checkpoint& ck = res.ckpt;
    ck.kind = cfg.model.kind;
    ck.trace_len = prof.trace_len();

    const auto& pre = cfg.preprocessing;
    if (pre.feature_file) {
        auto f = parse_feature_list(read_text(*pre.feature_file));
        try {
            f.validate(ck.trace_len);
        } catch (const std::exception& e) {
            throw DataError("feature file " + pre.feature_file->string() + ": " + e.what());
        }
        ck.features = std::move(f);
    } else if (pre.top_k) {
        if (*pre.top_k > ck.trace_len)
            throw DataError("top_k " + std::to_string(*pre.top_k) + " exceeds trace length " +
                            std::to_string(ck.trace_len));
        const auto ranking = gini_importance(fit_forest(prof.samples, labels, cfg.model.forest));
        auto sel = top_k(ranking, *pre.top_k);
        std::sort(sel.indices.begin(), sel.indices.end());
        ck.features = std::move(sel);
        res.notes.push_back("selected " + std::to_string(*pre.top_k) + " features by gini importance");
    }
    Matrix x = ck.features ? select_features(prof.samples, *ck.features) : prof.samples;
    if (pre.standardize) {
        ck.scaler = fit_scaler(x);
        x = apply_scaler(*ck.scaler, x);
    }
    res.notes.push_back("training " + to_string(ck.kind) + " on " + std::to_string(x.rows()) + " traces x " +
                       std::to_string(x.cols()) + " features");

    switch (ck.kind) {
        case ModelKind::template_attack:
            ck.model_bytes = encode_template(fit_templates(x, labels));
            break;
        case ModelKind::rf: {
            const auto model = fit_forest(x, labels, cfg.model.forest);
            ck.model_bytes = encode_forest(model);
            res.importance = importance_csv(gini_importance(model), ck);
            break;
        }
        case ModelKind::cnn:
        case ModelKind::resnet: {
            nn::NetConfig net_cfg;
            try {
                net_cfg = cfg.model.net.to_net_config(x.cols(), ck.kind == ModelKind::resnet);
            } catch (const std::invalid_argument& e) {
                throw DataError(std::string("network does not fit the data: ") + e.what());
            }
            nn::Network net(net_cfg, init_seed(cfg.model.train.seed));
            const auto hist = nn::train(net, x, labels, cfg.model.train);
            ck.model_bytes = nn::encode_network(net);
            std::string csv = "epoch,train_loss,validation_loss\n";
            for (std::size_t e = 0; e < hist.train_loss.size(); ++e)
                csv += std::to_string(e + 1) + "," + num(hist.train_loss[e]) + "," +
                       (e < hist.validation_loss.size() ? num(hist.validation_loss[e]) : "") + "\n";
            res.history = std::move(csv);
            if (!hist.train_loss.empty()) res.notes.push_back("final training loss " + num(hist.train_loss.back()));
            break;
        }
    }
    return res;
}

void write_train_outputs(const TrainResult& res, const fs::path& dir, RunLog& log) {
    for (const auto& n : res.notes) log.line(n);
    save_checkpoint(res.ckpt, dir / kModelFile);
    if (res.importance) write_text(dir / "importance.csv", *res.importance);
    if (res.history) write_text(dir / "train_history.csv", *res.history);
}

LogProbMatrix run_attack(const Checkpoint& ckpt, const TraceSet& traces, std::optional<std::size_t> n_traces) {
    std::size_t n = traces.size();
    if (n_traces) {
        if (*n_traces > traces.size())
            throw DataError("requested " + std::to_string(*n_traces) + " traces but the file holds " +
                            std::to_string(traces.size()));
        n = *n_traces;
    }
    Matrix raw = traces.samples;
    if (n != traces.size()) {
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        raw = traces.samples.gather_rows(rows);
    }
    return ckpt.load_classifier()->predict_log_proba(ckpt.prepare(raw));
}

json attack_meta(const Checkpoint& ckpt, std::size_t n) {
    return {{"model", to_string(ckpt.kind)}, {"features", ckpt.n_features()}, {"n_traces", n}};
}

fs::path sidecar_path(const fs::path& logprobs) { return fs::path(logprobs.string() + ".json"); }

struct RankOutputs {
    std::string curve_csv, curve_json, scores_csv, scores_json, summary;
};

RankOutputs compute_rank(const LogProbMatrix& lp, const TraceSet& traces, std::optional<std::uint8_t> true_key,
                         aes::ByteIndex b, std::size_t step, double epsilon, const json& meta) {
    const std::size_t n = lp.rows();
    if (n > traces.size())
        throw DataError(std::to_string(n) + " probability rows but only " + std::to_string(traces.size()) + " traces");
    const auto bi = static_cast<std::size_t>(b.value());
    if (!true_key) {
        if (!traces.keys) throw DataError("attack traces carry no key: pass --true-key");
        const std::uint8_t k = (*traces.keys)[0][bi];
        for (std::size_t i = 0; i < n; ++i)
            if ((*traces.keys)[i][bi] != k) throw DataError("attack traces use different keys: pass --true-key");
        true_key = k;
    }
    std::vector<std::uint8_t> pts(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        pts[i] = traces.plaintexts[i][bi];
        const std::uint8_t k = traces.keys ? (*traces.keys)[i][bi] : *true_key;
        labels[i] = aes::sbox_label(pts[i], k);
    }
    KeyRankConfig kc;
    kc.epsilon = epsilon;
    const auto curve = rank_curve(lp, pts, *true_key, step, kc);
    const auto scores = score_keys(lp, pts, kc);
    const auto t0 = traces_to_rank0(curve);

    json summary = {
        {"model", meta.value("model", json())},
        {"features", meta.value("features", json())},
        {"n_traces", n},
        {"byte_index", b.value()},
        {"true_key", hex_byte(*true_key)},
        {"final_rank", curve.points.back().rank},
        {"traces_to_rank0", t0 ? json(*t0) : json()},
        {"accuracy", accuracy(lp, labels)},
    };
    return {curve_to_csv(curve), curve_to_json(curve), scores_to_csv(scores), scores_to_json(scores),
            summary.dump(2) + "\n"};
}

void write_rank_outputs(const RankOutputs& r, const fs::path& dir) {
    write_text(dir / "rank_curve.csv", r.curve_csv);
    write_text(dir / "rank_curve.json", r.curve_json);
    write_text(dir / "scores.csv", r.scores_csv);
    write_text(dir / "scores.json", r.scores_json);
    write_text(dir / "summary.json", r.summary);
}

aes::ByteIndex parse_byte_index(int b) {
    if (b < 0 || b > 15) throw UsageError("--byte-index must lie in 0..15");
    return aes::ByteIndex(b);
}

}  // namespace

void simulate_command(const fs::path& config, const std::optional<fs::path>& out) {
    const RunConfig cfg = load_config(config);
    if (!cfg.dataset.simulator) throw UsageError("simulate needs a dataset.simulator section");
    const fs::path dir = output_dir(out, cfg);
    const auto& s = *cfg.dataset.simulator;
    const TraceSet prof = simulate(s.sim, s.n_profiling);
    const TraceSet att = simulate(s.attack_config(), s.n_attack);
    make_output_dir(dir);
    RunLog log(dir);
    save_native(prof, dir / kProfilingFile);
    save_native(att, dir / kAttackFile);
    log.line("simulated " + std::to_string(prof.size()) + " profiling and " + std::to_string(att.size()) +
             " attack traces, seed " + std::to_string(s.sim.seed));
}

void train_command(const fs::path& config, const std::optional<fs::path>& out) {
    const RunConfig cfg = load_config(config);
    const fs::path dir = output_dir(out, cfg);
    const Datasets data = cfg.dataset.simulator
                              ? obtain_datasets(cfg)
                              : Datasets{load_traces(*cfg.dataset.path / kProfilingFile), TraceSet{}};
    const TrainResult res = train_model(cfg, data.profiling);
    make_output_dir(dir);
    RunLog log(dir);
    if (cfg.dataset.simulator) {
        save_native(data.profiling, dir / kProfilingFile);
        save_native(data.attack, dir / kAttackFile);
    }
    write_train_outputs(res, dir, log);
    log.line("trained " + to_string(res.ckpt.kind) + " on " + std::to_string(res.ckpt.n_features()) + " features");
}

void attack_command(const fs::path& model, const fs::path& traces, const fs::path& out,
                    std::optional<std::size_t> n_traces) {
    if (!fs::exists(model)) throw DataError("missing model " + model.string());
    const Checkpoint ckpt = load_checkpoint(model);
    const TraceSet set = load_traces(traces);
    const auto lp = run_attack(ckpt, set, n_traces);
    if (out.has_parent_path()) make_output_dir(out.parent_path());
    save_logprobs(lp, out);
    write_text(sidecar_path(out), attack_meta(ckpt, lp.rows()).dump(2) + "\n");
}

void rank_command(const RankArgs& args) {
    if (args.step == 0) throw UsageError("--step must be >= 1");
    if (!(args.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
    std::optional<aes::ByteIndex> b;
    if (args.byte_index) b = parse_byte_index(*args.byte_index);
    std::optional<std::uint8_t> key;
    std::optional<aes::Block16> block;
    if (args.true_key) {
        if (args.true_key->size() == 32) block = parse_hex_block(*args.true_key);
        else key = parse_hex_byte(*args.true_key);
    }
    if (!fs::exists(args.logprobs)) throw DataError("missing log-probability file " + args.logprobs.string());
    const auto lp = load_logprobs(args.logprobs);
    const TraceSet set = load_traces(args.traces);
    const aes::ByteIndex bi = b.value_or(set.byte_index);
    if (block) key = (*block)[static_cast<std::size_t>(bi.value())];

    json meta = json::object();
    if (fs::exists(sidecar_path(args.logprobs))) {
        try {
            meta = json::parse(read_text(sidecar_path(args.logprobs)));
        } catch (const json::exception& e) {
            throw DataError("unreadable attack metadata: " + std::string(e.what()));
        }
        if (!meta.is_object()) throw DataError("attack metadata is not an object");
    }
    const auto r = compute_rank(lp, set, key, bi, args.step, args.epsilon, meta);
    make_output_dir(args.out);
    RunLog log(args.out);
    write_rank_outputs(r, args.out);
    log.line("ranked " + std::to_string(lp.rows()) + " traces");
}

void importance_command(const fs::path& model, std::size_t k, const fs::path& out) {
    if (!fs::exists(model)) throw DataError("missing model " + model.string());
    const Checkpoint ckpt = load_checkpoint(model);
    if (ckpt.kind != ModelKind::rf) throw DataError("importance needs a random forest model, got " + to_string(ckpt.kind));
    if (k < 1 || k > ckpt.n_features())
        throw UsageError("--top-k must lie in 1.." + std::to_string(ckpt.n_features()));
    const auto ranking = gini_importance(decode_forest(ckpt.model_bytes));
    FeatureIndexList top;
    for (auto f : top_k(ranking, k).indices) top.indices.push_back(ckpt.source_column(f));
    make_output_dir(out);
    RunLog log(out);
    write_text(out / "feature_ranking.csv", importance_csv(ranking, ckpt));
    write_text(out / "top_k.txt", format_feature_list(top));
    log.line("wrote top " + std::to_string(k) + " of " + std::to_string(ckpt.n_features()) + " features");
}

void report_command(const std::vector<fs::path>& inputs, const fs::path& out) {
    if (inputs.empty()) throw UsageError("report needs at least one input directory");
    json rows = json::array();
    for (const auto& dir : inputs) {
        const fs::path file = dir / "summary.json";
        if (!fs::exists(file)) throw DataError("missing " + file.string());
        json s;
        try {
            s = json::parse(read_text(file));
        } catch (const json::exception& e) {
            throw DataError("unreadable " + file.string() + ": " + e.what());
        }
        for (const char* key : {"model", "features", "traces_to_rank0", "final_rank", "accuracy"})
            if (!s.is_object() || !s.contains(key)) throw DataError(file.string() + " lacks '" + key + "'");
        const fs::path clean = dir.filename().empty() ? dir.parent_path() : dir;
        rows.push_back({{"run", clean.filename().string()},
                        {"model", s["model"]},
                        {"features", s["features"]},
                        {"traces_to_rank0", s["traces_to_rank0"]},
                        {"final_rank", s["final_rank"]},
                        {"accuracy", s["accuracy"]}});
    }
    std::string text;
    if (out.extension() == ".json") {
        text = rows.dump(2) + "\n";
    } else {
        auto cell = [](const json& v) {
            if (v.is_null()) return std::string();
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number_float()) return num(v.get<double>());
            return v.dump();
        };
        text = "run,model,features,traces_to_rank0,final_rank,accuracy\n";
        for (const auto& r : rows)
            text += cell(r["run"]) + "," + cell(r["model"]) + "," + cell(r["features"]) + "," +
                    cell(r["traces_to_rank0"]) + "," + cell(r["final_rank"]) + "," + cell(r["accuracy"]) + "\n";
    }
    if (out.has_parent_path()) make_output_dir(out.parent_path());
    write_text(out, text);
}

void pipeline_command(const fs::path& config, const std::optional<fs::path>& out) {
    const RunConfig cfg = load_config(config);
    const fs::path dir = output_dir(out, cfg);
    const Datasets data = obtain_datasets(cfg);
    const TrainResult res = train_model(cfg, data.profiling);
    const auto lp = run_attack(res.ckpt, data.attack, cfg.attack.n_traces);
    const json meta = attack_meta(res.ckpt, lp.rows());
    const auto ranks = compute_rank(lp, data.attack, cfg.attack.true_key, data.attack.byte_index, cfg.attack.step,
                                    cfg.attack.epsilon, meta);

    make_output_dir(dir);
    RunLog log(dir);
    if (cfg.dataset.simulator) {
        save_native(data.profiling, dir / kProfilingFile);
        save_native(data.attack, dir / kAttackFile);
    }
    write_train_outputs(res, dir, log);
    save_logprobs(lp, dir / kLogprobFile);
    write_text(sidecar_path(dir / kLogprobFile), meta.dump(2) + "\n");
    write_rank_outputs(ranks, dir);
    log.line("pipeline " + to_string(res.ckpt.kind) + ": " + std::to_string(lp.rows()) + " attack traces");
}

}  // namespace scaforge::cli
