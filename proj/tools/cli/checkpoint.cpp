#include "checkpoint.hpp"

#include "scaforge/binary_io.hpp"
#include "scaforge/errors.hpp"
#include "scaforge/neural_net.hpp"
#include "scaforge/random_forest.hpp"
#include "scaforge/template_attack.hpp"

namespace scaforge::cli {

namespace {
constexpr std::uint16_t kVersion = 1;
}

Matrix Checkpoint::prepare(const Matrix& raw) const {
    if (raw.cols() != trace_len)
        throw DimensionError("model expects traces of length " + std::to_string(trace_len) + ", got " +
                             std::to_string(raw.cols()));
    Matrix x = features ? select_features(raw, *features) : raw;
    return scaler ? apply_scaler(*scaler, x) : x;
}

std::size_t Checkpoint::source_column(std::size_t model_feature) const {
    return features ? features->indices.at(model_feature) : model_feature;
}

std::unique_ptr<ProbClassifier> Checkpoint::load_classifier() const {
    switch (kind) {
        case ModelKind::template_attack:
            return std::make_unique<TemplateClassifier>(decode_template(model_bytes));
        case ModelKind::rf:
            return std::make_unique<ForestClassifier>(decode_forest(model_bytes));
        case ModelKind::cnn:
        case ModelKind::resnet:
            return std::make_unique<nn::NetClassifier>(nn::decode_network(model_bytes));
    }
    throw FormatError(FormatErrc::value_out_of_range, "unknown model kind");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    io::ByteWriter w;
    w.magic("SCPK");
    w.put<std::uint16_t>(kVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.trace_len));
    const std::size_t n_sel = c.features ? c.features->size() : 0;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n_sel));
    if (c.features)
        for (auto i : c.features->indices) w.put<std::uint32_t>(static_cast<std::uint32_t>(i));
    w.put<std::uint8_t>(c.scaler ? 1 : 0);
    if (c.scaler) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(c.scaler->mean.size()));
        w.put_all<double>(c.scaler->mean);
        w.put_all<double>(c.scaler->stddev);
    }
    w.put<std::uint64_t>(c.model_bytes.size());
    w.bytes(c.model_bytes);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SCPK");
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) throw FormatError(FormatErrc::unsupported_version, "SCPK version " + std::to_string(version));
    Checkpoint c;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 3) throw FormatError(FormatErrc::value_out_of_range, "model kind " + std::to_string(kind));
    c.kind = static_cast<ModelKind>(kind);
    c.trace_len = r.get<std::uint32_t>();
    if (c.trace_len == 0) throw FormatError(FormatErrc::length_mismatch, "zero trace length");
    const std::size_t n_sel = r.get<std::uint32_t>();
    if (n_sel > 0) {
        FeatureIndexList f;
        for (auto i : r.get_vector<std::uint32_t>(n_sel)) f.indices.push_back(i);
        try {
            f.validate(c.trace_len);
        } catch (const std::exception& e) {
            throw FormatError(FormatErrc::value_out_of_range, std::string("feature list: ") + e.what());
        }
        c.features = std::move(f);
    }
    const auto has_scaler = r.get<std::uint8_t>();
    if (has_scaler > 1) throw FormatError(FormatErrc::bad_flags, "scaler flag");
    if (has_scaler) {
        const std::size_t l = r.get<std::uint32_t>();
        if (l != c.n_features()) throw FormatError(FormatErrc::length_mismatch, "scaler width differs from features");
        Scaler s;
        s.mean = r.get_vector<double>(l);
        s.stddev = r.get_vector<double>(l);
        c.scaler = std::move(s);
    }
    const auto n_model = r.get<std::uint64_t>();
    r.require_elements(n_model, 1);
    auto body = r.bytes(static_cast<std::size_t>(n_model));
    c.model_bytes.assign(body.begin(), body.end());
    r.expect_end();
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace scaforge::cli
