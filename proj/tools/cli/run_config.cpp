#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace scaforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw UsageError(where_ + ": expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    std::optional<T> get(const std::string& key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw UsageError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw UsageError("");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.is_number_integer() && !v.is_number_unsigned()) throw UsageError("");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw UsageError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw UsageError("");
            } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                if (!v.is_array()) throw UsageError("");
                for (const auto& e : v)
                    if (!e.is_number_unsigned()) throw UsageError("");
            }
            return v.get<T>();
        } catch (const std::exception&) {
            throw UsageError(where_ + "." + key + ": wrong type");
        }
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (auto v = get<T>(key)) out = *v;
    }

    std::optional<Section> child(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return Section(j_.at(key), where_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw UsageError(where_ + ": unknown key '" + k + "'");
    }

    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

SimulatorSection parse_simulator(Section s) {
    SimulatorSection out;
    SimConfig& c = out.sim;
    s.read("trace_len", c.trace_len);
    if (auto v = s.get<std::vector<std::size_t>>("leak_points")) c.leak_points.indices = *v;
    if (auto m = s.get<std::string>("leak_model")) {
        if (*m == "hamming_weight") c.leak_model = LeakModel::hamming_weight;
        else if (*m == "value") c.leak_model = LeakModel::value;
        else throw UsageError(s.where() + ".leak_model: expected hamming_weight or value");
    }
    s.read("amplitude", c.amplitude);
    s.read("noise_sigma", c.noise_sigma);
    s.read("baseline", c.baseline);
    if (auto m = s.get<std::string>("key_mode")) {
        if (*m == "fixed") c.key_mode = KeyMode::fixed;
        else if (*m == "variable") c.key_mode = KeyMode::variable;
        else throw UsageError(s.where() + ".key_mode: expected fixed or variable");
    }
    if (auto k = s.get<std::string>("key")) c.key = parse_hex_block(*k);
    if (auto b = s.get<int>("byte_index")) {
        if (*b < 0 || *b > 15) throw UsageError(s.where() + ".byte_index: must lie in 0..15");
        c.byte_index = aes::ByteIndex(*b);
    }
    s.read("seed", c.seed);
    s.read("n_profiling", out.n_profiling);
    s.read("n_attack", out.n_attack);
    s.finish();
    if (out.n_profiling < 2 || out.n_attack < 1)
        throw UsageError(s.where() + ": need n_profiling >= 2 and n_attack >= 1");
    try {
        c.validate();
    } catch (const std::exception& e) {
        throw UsageError(s.where() + ": " + e.what());
    }
    return out;
}

ForestConfig parse_forest(Section s) {
    ForestConfig f;
    s.read("n_trees", f.n_trees);
    s.read("max_depth", f.max_depth);
    s.read("min_samples_leaf", f.min_samples_leaf);
    if (s.has("max_features")) {
        const json& v = s.raw("max_features");
        if (v.is_string() && v == "sqrt") f.max_features = {MaxFeatures::Kind::sqrt, 0};
        else if (v.is_string() && v == "all") f.max_features = {MaxFeatures::Kind::all, 0};
        else if (v.is_number_unsigned()) f.max_features = {MaxFeatures::Kind::fixed, v.get<std::size_t>()};
        else throw UsageError(s.where() + ".max_features: expected \"sqrt\", \"all\" or a positive integer");
    }
    s.read("seed", f.seed);
    s.finish();
    try {
        f.validate();
    } catch (const std::exception& e) {
        throw UsageError(s.where() + ": " + e.what());
    }
    return f;
}

NetSection parse_net(Section s) {
    NetSection n;
    if (auto v = s.get<std::vector<std::size_t>>("channels")) n.channels = *v;
    s.read("kernel", n.kernel);
    s.read("dense_hidden", n.dense_hidden);
    s.read("dropout_p", n.dropout_p);
    s.read("batch_norm", n.batch_norm);
    s.finish();
    if (n.channels.empty()) throw UsageError(s.where() + ".channels: at least one block");
    if (n.kernel % 2 == 0) throw UsageError(s.where() + ".kernel: must be odd");
    if (!(n.dropout_p >= 0.0 && n.dropout_p < 1.0)) throw UsageError(s.where() + ".dropout_p: must lie in [0, 1)");
    if (n.dense_hidden == 0) throw UsageError(s.where() + ".dense_hidden: must be positive");
    for (auto c : n.channels)
        if (c == 0) throw UsageError(s.where() + ".channels: must be positive");
    return n;
}

nn::TrainConfig parse_train(Section s) {
    nn::TrainConfig t;
    s.read("lr", t.optimizer.lr);
    s.read("weight_decay", t.optimizer.weight_decay);
    s.read("decay_rate", t.optimizer.decay_rate);
    s.read("eps", t.optimizer.eps);
    s.read("batch_size", t.batch_size);
    s.read("epochs", t.epochs);
    s.read("seed", t.seed);
    s.read("validation_fraction", t.validation_fraction);
    s.finish();
    try {
        t.validate();
    } catch (const std::exception& e) {
        throw UsageError(s.where() + ": " + e.what());
    }
    return t;
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::template_attack: return "template";
        case ModelKind::rf: return "rf";
        case ModelKind::cnn: return "cnn";
        case ModelKind::resnet: return "resnet";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "template") return ModelKind::template_attack;
    if (s == "rf") return ModelKind::rf;
    if (s == "cnn") return ModelKind::cnn;
    if (s == "resnet") return ModelKind::resnet;
    throw UsageError("model.kind: expected template, rf, cnn or resnet, got '" + s + "'");
}

SimConfig SimulatorSection::attack_config() const {
    SimConfig a = sim;
    a.key_mode = KeyMode::fixed;
    a.seed = sim.seed + 1;
    return a;
}

nn::NetConfig NetSection::to_net_config(std::size_t trace_len, bool residual) const {
    auto cfg = nn::NetConfig::make(trace_len, channels, residual, dense_hidden, dropout_p, kernel);
    for (auto& b : cfg.blocks) b.batch_norm = batch_norm;
    cfg.validate();
    return cfg;
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
    RunConfig cfg;
    Section root(doc, "config");

    auto ds = root.child("dataset");
    if (!ds) throw UsageError("config: missing dataset section");
    if (auto p = ds->get<std::string>("path")) cfg.dataset.path = resolve(base_dir, *p);
    if (auto sim = ds->child("simulator")) cfg.dataset.simulator = parse_simulator(std::move(*sim));
    ds->finish();
    if (cfg.dataset.path.has_value() == cfg.dataset.simulator.has_value())
        throw UsageError("config.dataset: exactly one of path or simulator is required");

    if (auto pre = root.child("preprocessing")) {
        pre->read("standardize", cfg.preprocessing.standardize);
        if (auto f = pre->get<std::string>("feature_file")) cfg.preprocessing.feature_file = resolve(base_dir, *f);
        cfg.preprocessing.top_k = pre->get<std::size_t>("top_k");
        pre->finish();
        if (cfg.preprocessing.feature_file && cfg.preprocessing.top_k)
            throw UsageError("config.preprocessing: feature_file and top_k are exclusive");
        if (cfg.preprocessing.top_k == std::size_t{0}) throw UsageError("config.preprocessing.top_k: must be >= 1");
    }

    auto model = root.child("model");
    if (!model) throw UsageError("config: missing model section");
    auto kind = model->get<std::string>("kind");
    if (!kind) throw UsageError("config.model: missing kind");
    cfg.model.kind = parse_model_kind(*kind);
    if (auto f = model->child("forest")) cfg.model.forest = parse_forest(std::move(*f));
    if (auto n = model->child("net")) cfg.model.net = parse_net(std::move(*n));
    if (auto t = model->child("train")) cfg.model.train = parse_train(std::move(*t));
    model->finish();

    if (auto at = root.child("attack")) {
        cfg.attack.n_traces = at->get<std::size_t>("n_traces");
        at->read("step", cfg.attack.step);
        at->read("epsilon", cfg.attack.epsilon);
        if (auto k = at->get<std::string>("true_key")) cfg.attack.true_key = parse_hex_byte(*k);
        at->finish();
        if (cfg.attack.step == 0) throw UsageError("config.attack.step: must be >= 1");
        if (cfg.attack.n_traces == std::size_t{0}) throw UsageError("config.attack.n_traces: must be >= 1");
        if (!(cfg.attack.epsilon > 0.0)) throw UsageError("config.attack.epsilon: must be positive");
    }

    if (auto out = root.child("output")) {
        if (auto d = out->get<std::string>("directory")) cfg.output_directory = resolve(base_dir, *d);
        out->finish();
    }
    root.finish();
    return cfg;
}

RunConfig load_run_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open config " + file.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("malformed config " + file.string() + ": " + e.what());
    }
    return parse_run_config(doc, file.parent_path());
}

std::optional<std::uint64_t> seed_from_env() {
    const char* v = std::getenv("SCAFORGE_SEED");
    if (!v || !*v) return std::nullopt;
    const std::string s(v);
    if (!std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
        throw UsageError("SCAFORGE_SEED must be a non-negative integer");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw UsageError("SCAFORGE_SEED out of range");
    }
}

void apply_seed_override(RunConfig& cfg, std::uint64_t seed) {
    if (cfg.dataset.simulator) cfg.dataset.simulator->sim.seed = seed;
    cfg.model.forest.seed = seed;
    cfg.model.train.seed = seed;
}

std::uint8_t parse_hex_byte(const std::string& s) {
    std::string h = s;
    if (h.rfind("0x", 0) == 0 || h.rfind("0X", 0) == 0) h = h.substr(2);
    if (h.empty() || h.size() > 2 || !std::all_of(h.begin(), h.end(), [](unsigned char c) { return std::isxdigit(c); }))
        throw UsageError("expected a hex byte, got '" + s + "'");
    return static_cast<std::uint8_t>(std::stoul(h, nullptr, 16));
}

aes::Block16 parse_hex_block(const std::string& s) {
    if (s.size() != 32 || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isxdigit(c); }))
        throw UsageError("expected 32 hex digits, got '" + s + "'");
    aes::Block16 out{};
    for (std::size_t i = 0; i < 16; ++i) out[i] = static_cast<std::uint8_t>(std::stoul(s.substr(2 * i, 2), nullptr, 16));
    return out;
}

FeatureIndexList parse_feature_list(const std::string& text) {
    FeatureIndexList out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        line = line.substr(0, line.find('#'));
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream words(line);
        std::string w;
        while (words >> w) {
            if (!std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); }))
                throw DataError("feature file: bad index '" + w + "'");
            out.indices.push_back(std::stoull(w));
        }
    }
    if (out.indices.empty()) throw DataError("feature file lists no indices");
    return out;
}

std::string format_feature_list(const FeatureIndexList& features) {
    std::string out;
    for (auto i : features.indices) out += std::to_string(i) + "\n";
    return out;
}

}  // namespace scaforge::cli
