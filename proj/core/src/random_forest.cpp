#include "scaforge/random_forest.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include "scaforge/binary_io.hpp"
#include "scaforge/errors.hpp"

namespace scaforge {
namespace {

constexpr double kMinImprovement = 1e-12;

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Node seeds depend only on the node's position in the tree, so growing a
// tree deeper never changes the splits chosen above the old depth limit.
std::uint64_t child_key(std::uint64_t parent, int side) { return mix(parent * 2 + static_cast<std::uint64_t>(side) + 1); }

struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double weighted = 0.0;  // n_left * gini_left + n_right * gini_right
};

class TreeBuilder {
public:
    TreeBuilder(const std::vector<double>& columns, std::size_t n_rows, std::size_t n_features,
                std::span<const std::uint8_t> labels, const ForestConfig& cfg)
        : columns_(columns), n_rows_(n_rows), n_features_(n_features), labels_(labels), cfg_(cfg),
          mtry_(cfg.max_features.resolve(n_features)) {
        pool_.resize(n_features);
        pairs_.reserve(n_rows);
    }

    DecisionTree build(std::size_t tree_index) {
        tree_ = DecisionTree{};
        tree_.importance.assign(n_features_, 0.0);

        std::mt19937_64 rng(mix(cfg_.seed) ^ mix(tree_index + 1));
        std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n_rows_ - 1));
        work_.resize(n_rows_);
        for (auto& w : work_) w = draw(rng);

        grow(0, n_rows_, 0, mix(cfg_.seed + 0x5bd1e995ULL) ^ mix(~tree_index));
        return std::move(tree_);
    }

private:
    double value(std::size_t feature, std::uint32_t row) const { return columns_[feature * n_rows_ + row]; }

    std::uint32_t grow(std::size_t begin, std::size_t end, std::size_t depth, std::uint64_t key) {
        const auto n = static_cast<std::uint32_t>(end - begin);
        std::array<std::uint32_t, 256> counts{};
        for (std::size_t i = begin; i < end; ++i) ++counts[labels_[work_[i]]];
        const double node_gini = gini(counts, n);
        const auto distinct = std::count_if(counts.begin(), counts.end(), [](std::uint32_t c) { return c > 0; });

        const auto index = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        tree_.nodes[index].n_samples = n;

        Split best;
        if (depth < cfg_.max_depth && distinct > 1 && n >= 2 * cfg_.min_samples_leaf)
            best = find_split(begin, end, counts, key);

        if (!best.found || node_gini - best.weighted / n <= kMinImprovement) {
            auto& leaf = tree_.nodes[index];
            for (std::size_t c = 0; c < 256; ++c)
                if (counts[c] > 0) leaf.counts.push_back({static_cast<std::uint8_t>(c), counts[c]});
            return index;
        }

        tree_.importance[best.feature] +=
            static_cast<double>(n) / static_cast<double>(n_rows_) * (node_gini - best.weighted / n);

        auto mid = std::partition(work_.begin() + static_cast<std::ptrdiff_t>(begin),
                                  work_.begin() + static_cast<std::ptrdiff_t>(end),
                                  [&](std::uint32_t r) { return value(best.feature, r) <= best.threshold; });
        const auto split_at = static_cast<std::size_t>(mid - work_.begin());

        tree_.nodes[index].feature = static_cast<std::int32_t>(best.feature);
        tree_.nodes[index].threshold = best.threshold;
        const auto left = grow(begin, split_at, depth + 1, child_key(key, 0));
        const auto right = grow(split_at, end, depth + 1, child_key(key, 1));
        tree_.nodes[index].left = left;
        tree_.nodes[index].right = right;
        return index;
    }

    Split find_split(std::size_t begin, std::size_t end, const std::array<std::uint32_t, 256>& counts,
                     std::uint64_t key) {
        std::mt19937_64 rng(key);
        std::iota(pool_.begin(), pool_.end(), std::size_t{0});
        for (std::size_t i = 0; i < mtry_; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n_features_ - 1);
            std::swap(pool_[i], pool_[pick(rng)]);
        }
        std::vector<std::size_t> candidates(pool_.begin(), pool_.begin() + static_cast<std::ptrdiff_t>(mtry_));
        std::sort(candidates.begin(), candidates.end());

        const std::size_t n = end - begin;
        const std::size_t min_leaf = cfg_.min_samples_leaf;
        std::uint64_t total_sq = 0;
        for (auto c : counts) total_sq += static_cast<std::uint64_t>(c) * c;

        Split best;
        for (auto f : candidates) {
            pairs_.clear();
            for (std::size_t i = begin; i < end; ++i) pairs_.push_back({value(f, work_[i]), labels_[work_[i]]});
            std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            if (pairs_.front().first == pairs_.back().first) continue;

            std::array<std::uint32_t, 256> left{};
            std::uint64_t left_sq = 0;
            std::uint64_t right_sq = total_sq;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto y = pairs_[i].second;
                const std::uint64_t cl = left[y]++;
                const std::uint64_t cr = counts[y] - cl;
                left_sq += 2 * cl + 1;
                right_sq -= 2 * cr - 1;

                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (nl < min_leaf) continue;
                if (nr < min_leaf) break;
                if (!(pairs_[i].first < pairs_[i + 1].first)) continue;

                const double weighted = (static_cast<double>(nl) - static_cast<double>(left_sq) / nl) +
                                        (static_cast<double>(nr) - static_cast<double>(right_sq) / nr);
                if (!best.found || weighted < best.weighted) {
                    const double lo = pairs_[i].first;
                    const double hi = pairs_[i + 1].first;
                    double thr = lo + (hi - lo) / 2.0;
                    if (thr >= hi) thr = lo;
                    best = {true, f, thr, weighted};
                }
            }
        }
        return best;
    }

    const std::vector<double>& columns_;
    std::size_t n_rows_;
    std::size_t n_features_;
    std::span<const std::uint8_t> labels_;
    const ForestConfig& cfg_;
    std::size_t mtry_;

    DecisionTree tree_;
    std::vector<std::uint32_t> work_;
    std::vector<std::size_t> pool_;
    std::vector<std::pair<double, std::uint8_t>> pairs_;
};

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w)
        threads.emplace_back([&, w] {
            for (std::size_t i = next++; i < count; i = next++) fn(i, w);
        });
    for (auto& t : threads) t.join();
}

}  // namespace

std::size_t MaxFeatures::resolve(std::size_t n_features) const {
    switch (kind) {
    case Kind::sqrt:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))));
    case Kind::all: return n_features;
    case Kind::fixed: return std::clamp<std::size_t>(k, 1, n_features);
    }
    return n_features;
}

void ForestConfig::validate() const {
    if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    if (min_samples_leaf < 1) throw std::invalid_argument("min_samples_leaf must be >= 1");
    if (max_features.kind == MaxFeatures::Kind::fixed && max_features.k < 1)
        throw std::invalid_argument("fixed max_features must be >= 1");
}

double gini(std::span<const std::uint32_t> counts, std::uint32_t total) {
    if (total == 0) return 0.0;
    double sq = 0.0;
    for (auto c : counts) sq += static_cast<double>(c) * c;
    return 1.0 - sq / (static_cast<double>(total) * total);
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf())
        node = &nodes[x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right];
    return *node;
}

std::size_t DecisionTree::depth() const {
    if (nodes.empty()) return 0;
    std::size_t best = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [idx, d] = stack.back();
        stack.pop_back();
        const auto& node = nodes[idx];
        if (node.is_leaf()) {
            best = std::max(best, d);
        } else {
            stack.push_back({node.left, d + 1});
            stack.push_back({node.right, d + 1});
        }
    }
    return best;
}

ForestModel fit_forest(const Matrix& samples, std::span<const std::uint8_t> labels, const ForestConfig& cfg) {
    cfg.validate();
    const std::size_t n = samples.rows();
    const std::size_t l = samples.cols();
    if (n == 0 || l == 0) throw std::invalid_argument("cannot fit a forest on empty input");
    if (labels.size() != n) throw DimensionError("label count differs from trace count");
    if (n < cfg.min_samples_leaf) throw std::invalid_argument("fewer traces than min_samples_leaf");

    std::vector<double> columns(n * l);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = samples.row(i);
        for (std::size_t j = 0; j < l; ++j) columns[j * n + i] = r[j];
    }

    ForestModel model;
    model.config = cfg;
    model.n_features = l;
    model.trees.resize(cfg.n_trees);
    parallel_for(cfg.n_trees, [&](std::size_t t, std::size_t) {
        TreeBuilder builder(columns, n, l, labels, cfg);
        model.trees[t] = builder.build(t);
    });
    return model;
}

Matrix predict_proba(const ForestModel& model, const Matrix& samples) {
    if (samples.cols() != model.n_features)
        throw DimensionError("forest expects " + std::to_string(model.n_features) + " features, got " +
                             std::to_string(samples.cols()));
    Matrix probs(samples.rows(), kNumClasses);
    const double inv_trees = 1.0 / static_cast<double>(model.trees.size());
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto x = samples.row(i);
        auto p = probs.row(i);
        for (const auto& tree : model.trees) {
            const auto& leaf = tree.leaf_for(x);
            const double inv_n = 1.0 / static_cast<double>(leaf.n_samples);
            for (const auto& cc : leaf.counts) p[cc.label] += static_cast<double>(cc.count) * inv_n;
        }
        for (auto& v : p) v *= inv_trees;
    }
    return probs;
}

LogProbMatrix predict_log_proba(const ForestModel& model, const Matrix& samples) {
    Matrix probs = predict_proba(model, samples);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto p = probs.row(i);
        double total = 0.0;
        for (auto& v : p) {
            v = std::max(v, kForestProbFloor);
            total += v;
        }
        for (auto& v : p) v = std::log(v / total);
    }
    return LogProbMatrix(std::move(probs), 1e-9);
}

FeatureRanking rank_features(std::vector<double> importances) {
    FeatureRanking r;
    r.importances = std::move(importances);
    r.order.indices.resize(r.importances.size());
    std::iota(r.order.indices.begin(), r.order.indices.end(), std::size_t{0});
    std::stable_sort(r.order.indices.begin(), r.order.indices.end(),
                     [&](std::size_t a, std::size_t b) { return r.importances[a] > r.importances[b]; });
    return r;
}

FeatureRanking gini_importance(const ForestModel& model) {
    std::vector<double> total(model.n_features, 0.0);
    std::size_t contributing = 0;
    for (const auto& tree : model.trees) {
        const double s = std::accumulate(tree.importance.begin(), tree.importance.end(), 0.0);
        if (s <= 0.0) continue;
        ++contributing;
        for (std::size_t j = 0; j < total.size(); ++j) total[j] += tree.importance[j] / s;
    }
    if (contributing > 0) {
        for (auto& v : total) v /= static_cast<double>(contributing);
        const double s = std::accumulate(total.begin(), total.end(), 0.0);
        for (auto& v : total) v /= s;
    }
    return rank_features(std::move(total));
}

FeatureIndexList top_k(const FeatureRanking& ranking, std::size_t k) {
    const std::size_t l = ranking.order.size();
    if (k < 1 || k > l)
        throw std::out_of_range("top_k needs 1 <= k <= " + std::to_string(l) + ", got " + std::to_string(k));
    FeatureIndexList out;
    out.indices.assign(ranking.order.indices.begin(), ranking.order.indices.begin() + static_cast<std::ptrdiff_t>(k));
    return out;
}

std::vector<std::uint8_t> encode_forest(const ForestModel& model) {
    io::ByteWriter w;
    w.magic("SCRF");
    w.put<std::uint16_t>(1);
    const auto& c = model.config;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.n_trees));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.max_depth));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.min_samples_leaf));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.max_features.kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.max_features.k));
    w.put<std::uint64_t>(c.seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.n_features));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.trees.size()));
    for (const auto& tree : model.trees) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const auto& node : tree.nodes) {
            w.put<std::int32_t>(node.feature);
            w.put<double>(node.threshold);
            w.put<std::uint32_t>(node.left);
            w.put<std::uint32_t>(node.right);
            w.put<std::uint32_t>(node.n_samples);
            w.put<std::uint16_t>(static_cast<std::uint16_t>(node.counts.size()));
            for (const auto& cc : node.counts) {
                w.put<std::uint8_t>(cc.label);
                w.put<std::uint32_t>(cc.count);
            }
        }
        w.put_all(std::span<const double>(tree.importance));
    }
    return w.take();
}

ForestModel decode_forest(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SCRF");
    const auto version = r.get<std::uint16_t>();
    if (version != 1) throw FormatError(FormatErrc::unsupported_version, "SCRF version " + std::to_string(version));
    ForestModel m;
    m.config.n_trees = r.get<std::uint32_t>();
    m.config.max_depth = r.get<std::uint32_t>();
    m.config.min_samples_leaf = r.get<std::uint32_t>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 2) throw FormatError(FormatErrc::value_out_of_range, "max_features kind " + std::to_string(kind));
    m.config.max_features.kind = static_cast<MaxFeatures::Kind>(kind);
    m.config.max_features.k = r.get<std::uint32_t>();
    m.config.seed = r.get<std::uint64_t>();
    m.n_features = r.get<std::uint32_t>();
    const auto n_trees = r.get<std::uint32_t>();
    if (n_trees != m.config.n_trees) throw FormatError(FormatErrc::length_mismatch, "tree count differs from config");
    m.trees.resize(n_trees);
    for (auto& tree : m.trees) {
        const auto n_nodes = r.get<std::uint32_t>();
        r.require_elements(n_nodes, 26);
        tree.nodes.resize(n_nodes);
        for (std::uint32_t i = 0; i < n_nodes; ++i) {
            auto& node = tree.nodes[i];
            node.feature = r.get<std::int32_t>();
            node.threshold = r.get<double>();
            node.left = r.get<std::uint32_t>();
            node.right = r.get<std::uint32_t>();
            node.n_samples = r.get<std::uint32_t>();
            const auto n_counts = r.get<std::uint16_t>();
            node.counts.resize(n_counts);
            for (auto& cc : node.counts) {
                cc.label = r.get<std::uint8_t>();
                cc.count = r.get<std::uint32_t>();
            }
            const bool bad_split = !node.is_leaf() && (node.feature >= static_cast<std::int32_t>(m.n_features) ||
                                                       node.left <= i || node.right <= i ||
                                                       node.left >= n_nodes || node.right >= n_nodes);
            const bool bad_leaf = node.is_leaf() && node.n_samples == 0;
            if (bad_split || bad_leaf) throw FormatError(FormatErrc::value_out_of_range, "corrupt tree node");
        }
        tree.importance = r.get_vector<double>(m.n_features);
    }
    r.expect_end();
    return m;
}

}  // namespace scaforge
