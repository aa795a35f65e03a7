#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scaforge/classifier.hpp"
#include "scaforge/matrix.hpp"
#include "scaforge/trace_set.hpp"

namespace scaforge {

struct MaxFeatures {
    enum class Kind : std::uint8_t { sqrt = 0, all = 1, fixed = 2 };
    Kind kind = Kind::sqrt;
    std::size_t k = 0;  // only for fixed

    /// Candidate features drawn at each node for a dataset with `n_features` columns.
    std::size_t resolve(std::size_t n_features) const;
};

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 20;
    std::size_t min_samples_leaf = 10;
    MaxFeatures max_features;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ClassCount {
    std::uint8_t label;
    std::uint32_t count;
    friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

/// Split when feature >= 0, leaf otherwise. Samples with x[feature] <= threshold go left.
/// Leaves store sparse class counts over their (bootstrap) training samples.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t n_samples = 0;
    std::vector<ClassCount> counts;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    /// Unnormalized mean-decrease-in-impurity per feature.
    std::vector<double> importance;

    const TreeNode& leaf_for(std::span<const double> x) const;
    /// Longest root-to-leaf path, in edges.
    std::size_t depth() const;
    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestModel {
    ForestConfig config;
    std::size_t n_features = 0;
    std::vector<DecisionTree> trees;
};

struct FeatureRanking {
    std::vector<double> importances;
    FeatureIndexList order;  // importance-descending, ties by lower index
};

inline constexpr double kForestProbFloor = 1e-12;

double gini(std::span<const std::uint32_t> counts, std::uint32_t total);

ForestModel fit_forest(const Matrix& samples, std::span<const std::uint8_t> labels, const ForestConfig& cfg);

/// Mean of the reached leaves' class distributions (unclamped), one row per trace.
Matrix predict_proba(const ForestModel& model, const Matrix& samples);
LogProbMatrix predict_log_proba(const ForestModel& model, const Matrix& samples);

FeatureRanking gini_importance(const ForestModel& model);
FeatureRanking rank_features(std::vector<double> importances);
FeatureIndexList top_k(const FeatureRanking& ranking, std::size_t k);

std::vector<std::uint8_t> encode_forest(const ForestModel& model);
ForestModel decode_forest(std::span<const std::uint8_t> bytes);

class ForestClassifier final : public ProbClassifier {
public:
    explicit ForestClassifier(ForestConfig cfg = {}) : cfg_(cfg) {}
    explicit ForestClassifier(ForestModel model) : cfg_(model.config), model_(std::move(model)) {}

    void fit(const Matrix& samples, std::span<const std::uint8_t> labels) override {
        model_ = fit_forest(samples, labels, cfg_);
    }
    LogProbMatrix predict_log_proba(const Matrix& samples) const override {
        return scaforge::predict_log_proba(model_, samples);
    }
    std::string name() const override { return "rf"; }

    const ForestModel& model() const { return model_; }

private:
    ForestConfig cfg_;
    ForestModel model_;
};

}  // namespace scaforge
