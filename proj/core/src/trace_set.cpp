#include "scaforge/trace_set.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "scaforge/binary_io.hpp"
#include "scaforge/errors.hpp"

namespace scaforge {
namespace {

constexpr std::uint16_t kNativeVersion = 1;
constexpr std::uint16_t kFlagKeys = 0x1;
constexpr std::uint16_t kFlagLabels = 0x2;

template <typename Int>
Int to_integer_sample(double v) {
    if (v != std::floor(v) || v < std::numeric_limits<Int>::min() || v > std::numeric_limits<Int>::max())
        throw FormatError(FormatErrc::value_out_of_range,
                          "sample " + std::to_string(v) + " not representable in stored dtype");
    return static_cast<Int>(v);
}

}  // namespace

std::size_t sample_size(SampleType type) {
    switch (type) {
    case SampleType::f32: return 4;
    case SampleType::i8: return 1;
    case SampleType::i16: return 2;
    }
    throw FormatError(FormatErrc::unsupported_dtype, "unknown sample type");
}

std::vector<std::uint8_t> TraceSet::target_plaintexts() const {
    std::vector<std::uint8_t> out(plaintexts.size());
    const auto b = static_cast<std::size_t>(byte_index.value());
    for (std::size_t i = 0; i < plaintexts.size(); ++i) out[i] = plaintexts[i][b];
    return out;
}

void TraceSet::validate() const {
    const std::size_t n = size();
    if (n == 0 || trace_len() == 0) throw FormatError(FormatErrc::length_mismatch, "trace set is empty");
    if (plaintexts.size() != n) throw FormatError(FormatErrc::length_mismatch, "plaintext count differs from trace count");
    if (keys && keys->size() != n) throw FormatError(FormatErrc::length_mismatch, "key count differs from trace count");
    if (labels && labels->size() != n) throw FormatError(FormatErrc::length_mismatch, "label count differs from trace count");
    if (keys && labels) {
        const auto b = static_cast<std::size_t>(byte_index.value());
        for (std::size_t i = 0; i < n; ++i) {
            if ((*labels)[i] != aes::sbox_label(plaintexts[i][b], (*keys)[i][b]))
                throw FormatError(FormatErrc::label_mismatch, "label of trace " + std::to_string(i) +
                                                                  " disagrees with sbox(pt ^ key)");
        }
    }
}

void FeatureIndexList::validate(std::size_t trace_len) const {
    std::vector<bool> seen(trace_len, false);
    for (auto idx : indices) {
        if (idx >= trace_len)
            throw std::out_of_range("feature index " + std::to_string(idx) + " out of range for length " +
                                    std::to_string(trace_len));
        if (seen[idx]) throw std::invalid_argument("duplicate feature index " + std::to_string(idx));
        seen[idx] = true;
    }
}

Scaler fit_scaler(const Matrix& samples) {
    const std::size_t n = samples.rows();
    const std::size_t l = samples.cols();
    if (n == 0) throw std::invalid_argument("cannot fit a scaler on zero traces");
    Scaler s{std::vector<double>(l, 0.0), std::vector<double>(l, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        auto r = samples.row(i);
        for (std::size_t j = 0; j < l; ++j) s.mean[j] += r[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = samples.row(i);
        for (std::size_t j = 0; j < l; ++j) {
            const double d = r[j] - s.mean[j];
            s.stddev[j] += d * d;
        }
    }
    for (auto& v : s.stddev) {
        v = std::sqrt(v / static_cast<double>(n));
        if (v < kStdGuard) v = 1.0;
    }
    return s;
}

Scaler fit_scaler(const TraceSet& profiling) { return fit_scaler(profiling.samples); }

Matrix apply_scaler(const Scaler& scaler, const Matrix& samples) {
    if (samples.cols() != scaler.mean.size())
        throw DimensionError("scaler fitted on " + std::to_string(scaler.mean.size()) +
                             " features, got " + std::to_string(samples.cols()));
    Matrix out = samples;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - scaler.mean[j]) / scaler.stddev[j];
    }
    return out;
}

TraceSet apply_scaler(const Scaler& scaler, const TraceSet& set) {
    TraceSet out = set;
    out.samples = apply_scaler(scaler, set.samples);
    return out;
}

Matrix select_features(const Matrix& samples, const FeatureIndexList& features) {
    features.validate(samples.cols());
    Matrix out(samples.rows(), features.size());
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        auto src = samples.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < features.size(); ++j) dst[j] = src[features.indices[j]];
    }
    return out;
}

TraceSet select_features(const TraceSet& set, const FeatureIndexList& features) {
    TraceSet out = set;
    out.samples = select_features(set.samples, features);
    return out;
}

TraceSet select_traces(const TraceSet& set, std::span<const std::size_t> rows) {
    TraceSet out;
    out.samples = set.samples.gather_rows(rows);
    out.byte_index = set.byte_index;
    out.source_dtype = set.source_dtype;
    out.plaintexts.reserve(rows.size());
    for (auto r : rows) out.plaintexts.push_back(set.plaintexts.at(r));
    if (set.keys) {
        out.keys.emplace();
        for (auto r : rows) out.keys->push_back(set.keys->at(r));
    }
    if (set.labels) {
        out.labels.emplace();
        for (auto r : rows) out.labels->push_back(set.labels->at(r));
    }
    return out;
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2 || k > n)
        throw std::invalid_argument("fold count " + std::to_string(k) + " must lie in 2.." + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<Fold> folds(k);
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = n / k + (f < n % k ? 1 : 0);
        folds[f].validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                   perm.begin() + static_cast<std::ptrdiff_t>(start + len));
        std::vector<bool> in_val(n, false);
        for (auto v : folds[f].validation) in_val[v] = true;
        folds[f].train.reserve(n - len);
        for (std::size_t i = 0; i < n; ++i)
            if (!in_val[i]) folds[f].train.push_back(i);
        start += len;
    }
    return folds;
}

std::vector<std::uint8_t> encode_native(const TraceSet& set) {
    set.validate();
    io::ByteWriter w;
    w.magic("SCAT");
    w.put<std::uint16_t>(kNativeVersion);
    std::uint16_t flags = 0;
    if (set.keys) flags |= kFlagKeys;
    if (set.labels) flags |= kFlagLabels;
    w.put<std::uint16_t>(flags);
    w.put<std::uint64_t>(set.size());
    if (set.trace_len() > std::numeric_limits<std::uint32_t>::max())
        throw FormatError(FormatErrc::value_out_of_range, "trace length exceeds u32");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.trace_len()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(set.source_dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(set.byte_index.value()));
    w.zeros(6);

    for (double v : set.samples.values()) {
        switch (set.source_dtype) {
        case SampleType::f32: w.put(static_cast<float>(v)); break;
        case SampleType::i8: w.put(to_integer_sample<std::int8_t>(v)); break;
        case SampleType::i16: w.put(to_integer_sample<std::int16_t>(v)); break;
        }
    }
    for (const auto& p : set.plaintexts) w.bytes(p);
    if (set.keys)
        for (const auto& k : *set.keys) w.bytes(k);
    if (set.labels) w.bytes(*set.labels);
    return w.take();
}

TraceSet decode_native(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SCAT");
    const auto version = r.get<std::uint16_t>();
    if (version != kNativeVersion)
        throw FormatError(FormatErrc::unsupported_version, "SCAT version " + std::to_string(version));
    const auto flags = r.get<std::uint16_t>();
    if (flags & ~(kFlagKeys | kFlagLabels))
        throw FormatError(FormatErrc::bad_flags, "unknown flag bits set");
    const auto n = r.get<std::uint64_t>();
    const auto len = r.get<std::uint32_t>();
    const auto dtype = r.get<std::uint8_t>();
    const auto byte_index = r.get<std::uint8_t>();
    auto reserved = r.bytes(6);
    if (std::any_of(reserved.begin(), reserved.end(), [](std::uint8_t b) { return b != 0; }))
        throw FormatError(FormatErrc::bad_flags, "reserved header bytes must be zero");
    if (dtype < 1 || dtype > 3) throw FormatError(FormatErrc::unsupported_dtype, "dtype code " + std::to_string(dtype));
    if (byte_index > 15)
        throw FormatError(FormatErrc::value_out_of_range, "byte index " + std::to_string(byte_index));
    if (n == 0 || len == 0) throw FormatError(FormatErrc::length_mismatch, "empty trace set");

    TraceSet set;
    set.source_dtype = static_cast<SampleType>(dtype);
    set.byte_index = aes::ByteIndex(byte_index);

    const std::size_t elem = sample_size(set.source_dtype);
    if (n > r.remaining() / len) throw FormatError(FormatErrc::truncated, "sample payload shorter than declared");
    r.require_elements(static_cast<std::size_t>(n) * len, elem);
    const std::size_t rows = static_cast<std::size_t>(n);
    std::vector<double> data(rows * len);
    for (auto& v : data) {
        switch (set.source_dtype) {
        case SampleType::f32: v = r.get<float>(); break;
        case SampleType::i8: v = r.get<std::int8_t>(); break;
        case SampleType::i16: v = r.get<std::int16_t>(); break;
        }
    }
    set.samples = Matrix(rows, len, std::move(data));

    auto read_blocks = [&](std::size_t count) {
        r.require_elements(count, 16);
        std::vector<aes::Block16> out(count);
        for (auto& blk : out) {
            auto raw = r.bytes(16);
            std::copy(raw.begin(), raw.end(), blk.begin());
        }
        return out;
    };
    set.plaintexts = read_blocks(rows);
    if (flags & kFlagKeys) set.keys = read_blocks(rows);
    if (flags & kFlagLabels) {
        auto raw = r.bytes(rows);
        set.labels.emplace(raw.begin(), raw.end());
    }
    r.expect_end();
    set.validate();
    return set;
}

void save_native(const TraceSet& set, const std::filesystem::path& path) {
    io::write_file(path, encode_native(set));
}

TraceSet load_native(const std::filesystem::path& path) { return decode_native(io::read_file(path)); }

}  // namespace scaforge
