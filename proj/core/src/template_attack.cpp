#include "scaforge/template_attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "scaforge/binary_io.hpp"
#include "scaforge/errors.hpp"

namespace scaforge {

TemplateModel fit_templates(const Matrix& samples, std::span<const std::uint8_t> labels) {
    const std::size_t n = samples.rows();
    const std::size_t l = samples.cols();
    if (n < 2) throw std::invalid_argument("template fitting needs at least two traces");
    if (labels.size() != n) throw DimensionError("label count differs from trace count");

    TemplateModel m;
    m.class_means = Matrix(kNumClasses, l);
    m.pooled_var.assign(l, 0.0);
    m.class_log_prior.assign(kNumClasses, 0.0);

    std::array<std::size_t, 256> count{};
    std::vector<double> global(l, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ++count[labels[i]];
        auto x = samples.row(i);
        auto mu = m.class_means.row(labels[i]);
        for (std::size_t j = 0; j < l; ++j) {
            mu[j] += x[j];
            global[j] += x[j];
        }
    }
    for (auto& g : global) g /= static_cast<double>(n);

    std::size_t seen = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto mu = m.class_means.row(c);
        if (count[c] == 0) {
            std::copy(global.begin(), global.end(), mu.begin());
            continue;
        }
        m.seen_mask[c] = true;
        ++seen;
        for (auto& v : mu) v /= static_cast<double>(count[c]);
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto x = samples.row(i);
        auto mu = m.class_means.row(labels[i]);
        for (std::size_t j = 0; j < l; ++j) {
            const double d = x[j] - mu[j];
            m.pooled_var[j] += d * d;
        }
    }
    const double dof = n > seen ? static_cast<double>(n - seen) : static_cast<double>(n);
    for (auto& v : m.pooled_var) v = std::max(v / dof, kVarianceGuard);

    const double denom = std::log(static_cast<double>(n + kNumClasses));
    for (std::size_t c = 0; c < kNumClasses; ++c)
        m.class_log_prior[c] = std::log(static_cast<double>(count[c] + 1)) - denom;
    return m;
}

LogProbMatrix predict_log_proba(const TemplateModel& model, const Matrix& samples) {
    const std::size_t l = model.trace_len();
    if (samples.cols() != l)
        throw DimensionError("templates expect " + std::to_string(l) + " samples, got " +
                             std::to_string(samples.cols()));
    std::vector<double> inv2v(l);
    for (std::size_t j = 0; j < l; ++j) inv2v[j] = 0.5 / model.pooled_var[j];

    Matrix scores(samples.rows(), kNumClasses);
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto x = samples.row(i);
        auto out = scores.row(i);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            auto mu = model.class_means.row(c);
            double s = model.class_log_prior[c];
            for (std::size_t j = 0; j < l; ++j) {
                const double d = x[j] - mu[j];
                s -= d * d * inv2v[j];
            }
            out[c] = s;
        }
    }
    return LogProbMatrix::from_scores(std::move(scores));
}

std::vector<std::uint8_t> encode_template(const TemplateModel& model) {
    io::ByteWriter w;
    w.magic("SCTM");
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.trace_len()));
    w.put_all(model.class_means.values());
    w.put_all(std::span<const double>(model.pooled_var));
    w.put_all(std::span<const double>(model.class_log_prior));
    for (bool b : model.seen_mask) w.put<std::uint8_t>(b ? 1 : 0);
    return w.take();
}

TemplateModel decode_template(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SCTM");
    const auto version = r.get<std::uint16_t>();
    if (version != 1) throw FormatError(FormatErrc::unsupported_version, "SCTM version " + std::to_string(version));
    const std::size_t l = r.get<std::uint32_t>();
    r.require_elements(kNumClasses * l, sizeof(double));
    TemplateModel m;
    m.class_means = Matrix(kNumClasses, l, r.get_vector<double>(kNumClasses * l));
    m.pooled_var = r.get_vector<double>(l);
    m.class_log_prior = r.get_vector<double>(kNumClasses);
    for (auto& b : m.seen_mask) b = r.get<std::uint8_t>() != 0;
    r.expect_end();
    return m;
}

}  // namespace scaforge
