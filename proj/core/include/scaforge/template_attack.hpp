#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "scaforge/classifier.hpp"
#include "scaforge/matrix.hpp"

namespace scaforge {

/// Gaussian templates with a shared diagonal covariance.
struct TemplateModel {
    Matrix class_means;                  // 256 x L
    std::vector<double> pooled_var;      // L, every entry > 0
    std::vector<double> class_log_prior; // 256, log-sum-exp == 0
    std::array<bool, 256> seen_mask{};

    std::size_t trace_len() const { return pooled_var.size(); }
};

inline constexpr double kVarianceGuard = 1e-12;

/// Unseen classes fall back to the global mean. The pooled variance divides
/// the within-class residual sum of squares by N - K (K = seen classes), or
/// by N when N <= K. Priors use add-one smoothing.
TemplateModel fit_templates(const Matrix& samples, std::span<const std::uint8_t> labels);

LogProbMatrix predict_log_proba(const TemplateModel& model, const Matrix& samples);

std::vector<std::uint8_t> encode_template(const TemplateModel& model);
TemplateModel decode_template(std::span<const std::uint8_t> bytes);

class TemplateClassifier final : public ProbClassifier {
public:
    TemplateClassifier() = default;
    explicit TemplateClassifier(TemplateModel model) : model_(std::move(model)) {}

    void fit(const Matrix& samples, std::span<const std::uint8_t> labels) override {
        model_ = fit_templates(samples, labels);
    }
    LogProbMatrix predict_log_proba(const Matrix& samples) const override {
        return scaforge::predict_log_proba(model_, samples);
    }
    std::string name() const override { return "template"; }

    const TemplateModel& model() const { return model_; }

private:
    TemplateModel model_;
};

}  // namespace scaforge
