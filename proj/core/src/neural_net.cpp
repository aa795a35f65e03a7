#include "scaforge/neural_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "scaforge/binary_io.hpp"
#include "scaforge/errors.hpp"

namespace scaforge::nn {
namespace {

void uniform_init(Parameter& p, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.value) v = dist(rng);
}

void require_shape(bool ok, const std::string& layer, const std::string& what) {
    if (!ok) throw DimensionError(layer + ": " + what);
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

}  // namespace

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t pad)
    : in_channels(in_ch), out_channels(out_ch), kernel(k), padding(pad),
      weight("weight", out_ch * in_ch * k), bias("bias", out_ch) {
    if (in_ch == 0 || out_ch == 0 || k == 0) throw std::invalid_argument("conv1d dimensions must be positive");
}

Tensor Conv1d::forward(const Tensor& x, Mode) {
    require_shape(x.channels == in_channels, "conv1d", "expected " + std::to_string(in_channels) + " input channels");
    require_shape(x.length + 2 * padding >= kernel, "conv1d", "input shorter than kernel");
    input_ = x;
    const std::size_t len = x.length;
    const std::size_t out_len = len + 2 * padding - kernel + 1;
    Tensor y(x.batch, out_channels, out_len);
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t o = 0; o < out_channels; ++o) {
            auto out = y.series(b, o);
            std::fill(out.begin(), out.end(), bias.value[o]);
            for (std::size_t i = 0; i < in_channels; ++i) {
                auto in = x.series(b, i);
                const double* w = &weight.value[(o * in_channels + i) * kernel];
                for (std::size_t k = 0; k < kernel; ++k) {
                    // out[t] += w[k] * in[t + k - padding]
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
                    const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                    const std::size_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_len),
                                                                    static_cast<std::ptrdiff_t>(len) - shift);
                    const double wk = w[k];
                    for (std::size_t t = t0; t < t1; ++t) out[t] += wk * in[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift)];
                }
            }
        }
    }
    return y;
}

Tensor Conv1d::backward(const Tensor& g) {
    const Tensor& x = input_;
    const std::size_t len = x.length;
    const std::size_t out_len = g.length;
    Tensor dx(x.batch, in_channels, len);
    for (std::size_t b = 0; b < x.batch; ++b) {
        for (std::size_t o = 0; o < out_channels; ++o) {
            auto go = g.series(b, o);
            bias.grad[o] += std::accumulate(go.begin(), go.end(), 0.0);
            for (std::size_t i = 0; i < in_channels; ++i) {
                auto in = x.series(b, i);
                auto din = dx.series(b, i);
                const std::size_t base = (o * in_channels + i) * kernel;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(padding);
                    const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                    const std::size_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_len),
                                                                    static_cast<std::ptrdiff_t>(len) - shift);
                    const double wk = weight.value[base + k];
                    double acc = 0.0;
                    for (std::size_t t = t0; t < t1; ++t) {
                        const auto s = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift);
                        acc += go[t] * in[s];
                        din[s] += go[t] * wk;
                    }
                    weight.grad[base + k] += acc;
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- BatchNorm1d

BatchNorm1d::BatchNorm1d(std::size_t ch, double e, double m)
    : channels(ch), eps(e), momentum(m), gamma("gamma", ch), beta("beta", ch), running_mean(ch, 0.0),
      running_var(ch, 1.0) {
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode) {
    require_shape(x.channels == channels, "batchnorm1d", "channel count mismatch");
    mode_ = mode;
    const std::size_t count = x.batch * x.length;
    Tensor y(x.batch, x.channels, x.length);
    normalized_ = Tensor(x.batch, x.channels, x.length);
    inv_std_.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        double mean = running_mean[c];
        double var = running_var[c];
        if (mode == Mode::train) {
            mean = 0.0;
            for (std::size_t b = 0; b < x.batch; ++b)
                for (double v : x.series(b, c)) mean += v;
            mean /= static_cast<double>(count);
            var = 0.0;
            for (std::size_t b = 0; b < x.batch; ++b)
                for (double v : x.series(b, c)) var += (v - mean) * (v - mean);
            var /= static_cast<double>(count);
            const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[c] = inv;
        for (std::size_t b = 0; b < x.batch; ++b) {
            auto in = x.series(b, c);
            auto nh = normalized_.series(b, c);
            auto out = y.series(b, c);
            for (std::size_t t = 0; t < x.length; ++t) {
                nh[t] = (in[t] - mean) * inv;
                out[t] = gamma.value[c] * nh[t] + beta.value[c];
            }
        }
    }
    return y;
}

Tensor BatchNorm1d::backward(const Tensor& g) {
    const auto& xh = normalized_;
    const double count = static_cast<double>(g.batch * g.length);
    Tensor dx(g.batch, g.channels, g.length);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
            auto go = g.series(b, c);
            auto nh = xh.series(b, c);
            for (std::size_t t = 0; t < g.length; ++t) {
                sum_g += go[t];
                sum_gx += go[t] * nh[t];
            }
        }
        gamma.grad[c] += sum_gx;
        beta.grad[c] += sum_g;
        const double scale = gamma.value[c] * inv_std_[c];
        for (std::size_t b = 0; b < g.batch; ++b) {
            auto go = g.series(b, c);
            auto nh = xh.series(b, c);
            auto d = dx.series(b, c);
            if (mode_ == Mode::train) {
                for (std::size_t t = 0; t < g.length; ++t)
                    d[t] = scale * (go[t] - sum_g / count - nh[t] * sum_gx / count);
            } else {
                for (std::size_t t = 0; t < g.length; ++t) d[t] = scale * go[t];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- ReLU / pooling

Tensor ReLU::forward(const Tensor& x, Mode) {
    output_ = x;
    for (auto& v : output_.data) v = v > 0.0 ? v : 0.0;
    return output_;
}

Tensor ReLU::backward(const Tensor& g) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (!(output_.data[i] > 0.0)) dx.data[i] = 0.0;
    return dx;
}

Tensor AvgPool1d::forward(const Tensor& x, Mode) {
    require_shape(x.length >= 2, "avgpool1d", "input length must be at least 2");
    in_length_ = x.length;
    Tensor y(x.batch, x.channels, x.length / 2);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c) {
            auto in = x.series(b, c);
            auto out = y.series(b, c);
            for (std::size_t t = 0; t < out.size(); ++t) out[t] = 0.5 * (in[2 * t] + in[2 * t + 1]);
        }
    return y;
}

Tensor AvgPool1d::backward(const Tensor& g) {
    Tensor dx(g.batch, g.channels, in_length_);
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t c = 0; c < g.channels; ++c) {
            auto go = g.series(b, c);
            auto d = dx.series(b, c);
            for (std::size_t t = 0; t < go.size(); ++t) {
                d[2 * t] = 0.5 * go[t];
                d[2 * t + 1] = 0.5 * go[t];
            }
        }
    return dx;
}

// ---------------------------------------------------------------- Dense / Dropout

Dense::Dense(std::size_t in, std::size_t out)
    : in_features(in), out_features(out), weight("weight", out * in), bias("bias", out) {
    if (in == 0 || out == 0) throw std::invalid_argument("dense dimensions must be positive");
}

Tensor Dense::forward(const Tensor& x, Mode) {
    require_shape(x.channels * x.length == in_features, "dense",
                  "expected " + std::to_string(in_features) + " input features");
    input_ = x;
    Tensor y(x.batch, out_features, 1);
    for (std::size_t b = 0; b < x.batch; ++b) {
        const double* in = &x.data[b * in_features];
        double* out = &y.data[b * out_features];
        for (std::size_t o = 0; o < out_features; ++o) {
            const double* w = &weight.value[o * in_features];
            double acc = bias.value[o];
            for (std::size_t i = 0; i < in_features; ++i) acc += w[i] * in[i];
            out[o] = acc;
        }
    }
    return y;
}

Tensor Dense::backward(const Tensor& g) {
    const Tensor& x = input_;
    Tensor dx(x.batch, x.channels, x.length);
    for (std::size_t b = 0; b < x.batch; ++b) {
        const double* in = &x.data[b * in_features];
        const double* go = &g.data[b * out_features];
        double* d = &dx.data[b * in_features];
        for (std::size_t o = 0; o < out_features; ++o) {
            const double gv = go[o];
            if (gv == 0.0) continue;
            bias.grad[o] += gv;
            const double* w = &weight.value[o * in_features];
            double* gw = &weight.grad[o * in_features];
            for (std::size_t i = 0; i < in_features; ++i) {
                gw[i] += gv * in[i];
                d[i] += gv * w[i];
            }
        }
    }
    return dx;
}

Tensor Dropout::forward(const Tensor& x, Mode mode) {
    if (mode == Mode::eval || p == 0.0) {
        mask_.assign(x.data.size(), 1.0);
        return x;
    }
    std::bernoulli_distribution keep(1.0 - p);
    const double scale = 1.0 / (1.0 - p);
    mask_.resize(x.data.size());
    Tensor y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        mask_[i] = keep(*rng_) ? scale : 0.0;
        y.data[i] *= mask_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& g) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
}

// ---------------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t padding,
                             bool batch_norm)
    : conv1(std::make_unique<Conv1d>(in_ch, out_ch, kernel, padding)),
      conv2(std::make_unique<Conv1d>(out_ch, out_ch, kernel, padding)) {
    if (batch_norm) {
        bn1 = std::make_unique<BatchNorm1d>(out_ch);
        bn2 = std::make_unique<BatchNorm1d>(out_ch);
    }
    if (in_ch != out_ch) shortcut = std::make_unique<Conv1d>(in_ch, out_ch, 1, 0);
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) {
    Tensor h = conv1->forward(x, mode);
    if (bn1) h = bn1->forward(h, mode);
    h = inner_relu_.forward(h, mode);
    h = conv2->forward(h, mode);
    if (bn2) h = bn2->forward(h, mode);
    const Tensor skip = shortcut ? shortcut->forward(x, mode) : x;
    require_shape(h.same_shape(skip), "residual", "main path and shortcut shapes differ");
    return out_relu_.forward(add(h, skip), mode);
}

Tensor ResidualBlock::backward(const Tensor& g) {
    const Tensor g_sum = out_relu_.backward(g);
    Tensor gm = g_sum;
    if (bn2) gm = bn2->backward(gm);
    gm = conv2->backward(gm);
    gm = inner_relu_.backward(gm);
    if (bn1) gm = bn1->backward(gm);
    gm = conv1->backward(gm);
    const Tensor gs = shortcut ? shortcut->backward(g_sum) : g_sum;
    return add(gm, gs);
}

void ResidualBlock::collect_parameters(std::vector<Parameter*>& out) {
    conv1->collect_parameters(out);
    if (bn1) bn1->collect_parameters(out);
    conv2->collect_parameters(out);
    if (bn2) bn2->collect_parameters(out);
    if (shortcut) shortcut->collect_parameters(out);
}

void ResidualBlock::collect_buffers(std::vector<std::vector<double>*>& out) {
    if (bn1) bn1->collect_buffers(out);
    if (bn2) bn2->collect_buffers(out);
}

// ---------------------------------------------------------------- configuration

NetConfig NetConfig::make(std::size_t trace_len, std::span<const std::size_t> channels, bool residual,
                          std::size_t dense_hidden, double dropout_p, std::size_t kernel) {
    NetConfig cfg;
    cfg.trace_len = trace_len;
    cfg.dense_hidden = dense_hidden;
    cfg.dropout_p = dropout_p;
    std::size_t in = 1;
    for (auto out : channels) {
        ConvBlockSpec b;
        b.in_channels = in;
        b.out_channels = out;
        b.kernel = kernel;
        b.padding = (kernel - 1) / 2;
        b.residual = residual;
        cfg.blocks.push_back(b);
        in = out;
    }
    return cfg;
}

namespace {
constexpr std::size_t kFullChannels[] = {64, 128, 256, 512};
constexpr std::size_t kDeskChannels[] = {8, 16, 16, 32};
}  // namespace

NetConfig NetConfig::full_cnn(std::size_t l) { return make(l, kFullChannels, false, 4096, 0.5); }
NetConfig NetConfig::full_resnet(std::size_t l) { return make(l, kFullChannels, true, 4096, 0.5); }
NetConfig NetConfig::desk_cnn(std::size_t l) { return make(l, kDeskChannels, false, 128, 0.5); }
NetConfig NetConfig::desk_resnet(std::size_t l) { return make(l, kDeskChannels, true, 128, 0.5); }

std::size_t NetConfig::final_length() const {
    std::size_t len = trace_len;
    for (const auto& b : blocks) {
        len = len + 2 * b.padding - b.kernel + 1;
        if (b.pool) len /= 2;
    }
    return len;
}

std::size_t NetConfig::dense_input_size() const {
    validate();
    return final_length() * blocks.back().out_channels;
}

bool NetConfig::residual() const {
    return std::any_of(blocks.begin(), blocks.end(), [](const ConvBlockSpec& b) { return b.residual; });
}

void NetConfig::validate() const {
    if (blocks.empty()) throw std::invalid_argument("network needs at least one block");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("dropout_p must lie in [0, 1)");
    if (dense_hidden == 0 || n_classes == 0) throw std::invalid_argument("dense sizes must be positive");
    std::size_t in = 1;
    std::size_t len = trace_len;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const auto where = "block " + std::to_string(i) + ": ";
        if (b.in_channels != in) throw std::invalid_argument(where + "input channels do not chain");
        if (b.out_channels == 0) throw std::invalid_argument(where + "zero output channels");
        if (b.kernel % 2 == 0) throw std::invalid_argument(where + "kernel must be odd");
        if (b.padding != (b.kernel - 1) / 2) throw std::invalid_argument(where + "padding must be (kernel-1)/2");
        if (b.pool) {
            if (len < 2) throw std::invalid_argument(where + "trace too short for pooling");
            len /= 2;
        }
        in = b.out_channels;
    }
    if (len == 0) throw std::invalid_argument("trace too short for the configured blocks");
}

std::size_t flatten_size(std::size_t trace_len, std::size_t n_blocks, std::size_t last_channels) {
    if (n_blocks >= 64 || trace_len < (std::size_t{1} << n_blocks))
        throw std::invalid_argument("trace length " + std::to_string(trace_len) + " too short for " +
                                    std::to_string(n_blocks) + " pooling stages");
    std::size_t len = trace_len;
    for (std::size_t i = 0; i < n_blocks; ++i) len /= 2;
    return len * last_channels;
}

// ---------------------------------------------------------------- Network

Network::Network(NetConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), dropout_rng_(std::make_shared<std::mt19937_64>(init_seed ^ 0xd1b54a32d192ed03ULL)) {
    cfg_.validate();
    for (const auto& b : cfg_.blocks) {
        if (b.residual) {
            layers_.push_back(std::make_unique<ResidualBlock>(b.in_channels, b.out_channels, b.kernel, b.padding,
                                                              b.batch_norm));
        } else {
            layers_.push_back(std::make_unique<Conv1d>(b.in_channels, b.out_channels, b.kernel, b.padding));
            if (b.batch_norm) layers_.push_back(std::make_unique<BatchNorm1d>(b.out_channels));
            layers_.push_back(std::make_unique<ReLU>());
        }
        if (b.pool) layers_.push_back(std::make_unique<AvgPool1d>());
    }
    layers_.push_back(std::make_unique<Dense>(cfg_.dense_input_size(), cfg_.dense_hidden));
    layers_.push_back(std::make_unique<ReLU>());
    layers_.push_back(std::make_unique<Dropout>(cfg_.dropout_p, dropout_rng_));
    layers_.push_back(std::make_unique<Dense>(cfg_.dense_hidden, cfg_.n_classes));

    std::mt19937_64 rng(init_seed);
    auto init_conv = [&](Conv1d& c) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(c.in_channels * c.kernel));
        uniform_init(c.weight, bound, rng);
        uniform_init(c.bias, bound, rng);
    };
    for (auto& layer : layers_) {
        if (auto* c = dynamic_cast<Conv1d*>(layer.get())) {
            init_conv(*c);
        } else if (auto* r = dynamic_cast<ResidualBlock*>(layer.get())) {
            init_conv(*r->conv1);
            init_conv(*r->conv2);
            if (r->shortcut) init_conv(*r->shortcut);
        } else if (auto* d = dynamic_cast<Dense*>(layer.get())) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(d->in_features));
            uniform_init(d->weight, bound, rng);
            uniform_init(d->bias, bound, rng);
        }
    }
}

Matrix Network::forward(const Matrix& batch) {
    require_shape(batch.cols() == cfg_.trace_len, "network",
                  "expected traces of length " + std::to_string(cfg_.trace_len) + ", got " +
                      std::to_string(batch.cols()));
    Tensor x(batch.rows(), 1, batch.cols());
    std::copy(batch.values().begin(), batch.values().end(), x.data.begin());
    for (auto& layer : layers_) x = layer->forward(x, mode_);
    return Matrix(batch.rows(), cfg_.n_classes, std::move(x.data));
}

void Network::backward(const Matrix& grad_logits) {
    Tensor g(grad_logits.rows(), cfg_.n_classes, 1);
    std::copy(grad_logits.values().begin(), grad_logits.values().end(), g.data.begin());
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    for (auto& layer : layers_) layer->collect_parameters(out);
    return out;
}

std::vector<std::vector<double>*> Network::buffers() {
    std::vector<std::vector<double>*> out;
    for (auto& layer : layers_) layer->collect_buffers(out);
    return out;
}

void Network::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------- loss / optimizer / training

double softmax_cross_entropy(const Matrix& logits, std::span<const std::uint8_t> labels, Matrix* grad) {
    if (logits.rows() != labels.size()) throw DimensionError("logit rows and labels differ in length");
    if (logits.rows() == 0) throw std::invalid_argument("empty batch");
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    if (grad) *grad = Matrix(logits.rows(), logits.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] >= logits.cols()) throw std::out_of_range("label out of range for the output layer");
        auto z = logits.row(i);
        const double lse = log_sum_exp(z);
        loss += lse - z[labels[i]];
        if (grad) {
            auto g = grad->row(i);
            for (std::size_t c = 0; c < z.size(); ++c) g[c] = std::exp(z[c] - lse) * inv_b;
            g[labels[i]] -= inv_b;
        }
    }
    return loss * inv_b;
}

double loss_and_grad(Network& net, const Matrix& batch, std::span<const std::uint8_t> labels) {
    if (net.mode() != Mode::train) throw std::logic_error("loss_and_grad requires train mode");
    net.zero_grad();
    const Matrix logits = net.forward(batch);
    Matrix grad;
    const double loss = softmax_cross_entropy(logits, labels, &grad);
    net.backward(grad);
    return loss;
}

void RmsProp::step(std::span<Parameter* const> params) {
    if (square_avg_.size() != params.size()) {
        square_avg_.clear();
        for (auto* p : params) square_avg_.emplace_back(p->value.size(), 0.0);
    }
    const double rho = cfg_.decay_rate;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& s = square_avg_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            s[i] = rho * s[i] + (1.0 - rho) * g * g;
            p.value[i] -= cfg_.lr * (g / (std::sqrt(s[i]) + cfg_.eps) + cfg_.weight_decay * p.value[i]);
        }
    }
}

void TrainConfig::validate() const {
    if (!(optimizer.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (optimizer.weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
    if (!(optimizer.decay_rate >= 0.0 && optimizer.decay_rate < 1.0))
        throw std::invalid_argument("decay_rate must lie in [0, 1)");
    if (!(optimizer.eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("validation_fraction must lie in [0, 1)");
}

namespace {

double evaluate_loss(Network& net, const Matrix& samples, std::span<const std::uint8_t> labels,
                     std::span<const std::size_t> rows, std::size_t batch_size) {
    double total = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const auto chunk = rows.subspan(start, std::min(batch_size, rows.size() - start));
        std::vector<std::uint8_t> y(chunk.size());
        for (std::size_t i = 0; i < chunk.size(); ++i) y[i] = labels[chunk[i]];
        total += softmax_cross_entropy(net.forward(samples.gather_rows(chunk)), y) * static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(rows.size());
}

}  // namespace

TrainHistory train(Network& net, const Matrix& samples, std::span<const std::uint8_t> labels, const TrainConfig& cfg) {
    cfg.validate();
    if (samples.rows() == 0) throw std::invalid_argument("no training data");
    if (labels.size() != samples.rows()) throw DimensionError("label count differs from trace count");

    std::mt19937_64 rng(cfg.seed);
    net.reseed_dropout(cfg.seed ^ 0x632be59bd9b4e019ULL);

    std::vector<std::size_t> order(samples.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(order.size())));
    if (n_val >= order.size()) throw std::invalid_argument("validation split leaves no training data");
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    RmsProp opt(cfg.optimizer);
    const auto params = net.parameters();
    TrainHistory history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        net.set_mode(Mode::train);
        std::shuffle(tr.begin(), tr.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < tr.size(); start += cfg.batch_size) {
            const auto chunk = std::span<const std::size_t>(tr).subspan(start, std::min(cfg.batch_size, tr.size() - start));
            std::vector<std::uint8_t> y(chunk.size());
            for (std::size_t i = 0; i < chunk.size(); ++i) y[i] = labels[chunk[i]];
            const double loss = loss_and_grad(net, samples.gather_rows(chunk), y);
            opt.step(params);
            epoch_loss += loss * static_cast<double>(chunk.size());
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(tr.size()));
        if (!val.empty()) {
            net.set_mode(Mode::eval);
            history.validation_loss.push_back(evaluate_loss(net, samples, labels, val, cfg.batch_size));
        }
    }
    net.set_mode(Mode::eval);
    return history;
}

LogProbMatrix predict_log_proba(Network& net, const Matrix& samples) {
    constexpr std::size_t kChunk = 256;
    const Mode previous = net.mode();
    net.set_mode(Mode::eval);
    Matrix out(samples.rows(), net.config().n_classes);
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < samples.rows(); start += kChunk) {
        rows.resize(std::min(kChunk, samples.rows() - start));
        std::iota(rows.begin(), rows.end(), start);
        const Matrix logits = net.forward(samples.gather_rows(rows));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = logits.row(i);
            std::copy(src.begin(), src.end(), out.row(start + i).begin());
        }
    }
    net.set_mode(previous);
    return LogProbMatrix::from_scores(std::move(out));
}

// ---------------------------------------------------------------- checkpoint

std::vector<std::uint8_t> encode_network(Network& net) {
    const auto& cfg = net.config();
    io::ByteWriter w;
    w.magic("SCNN");
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.trace_len));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.blocks.size()));
    for (const auto& b : cfg.blocks) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.in_channels));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.out_channels));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.kernel));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(b.padding));
        w.put<std::uint8_t>(b.batch_norm ? 1 : 0);
        w.put<std::uint8_t>(b.pool ? 1 : 0);
        w.put<std::uint8_t>(b.residual ? 1 : 0);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.dense_hidden));
    w.put<double>(cfg.dropout_p);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.n_classes));
    for (auto* p : net.parameters()) {
        w.put<std::uint64_t>(p->value.size());
        w.put_all(std::span<const double>(p->value));
    }
    for (auto* buf : net.buffers()) {
        w.put<std::uint64_t>(buf->size());
        w.put_all(std::span<const double>(*buf));
    }
    return w.take();
}

Network decode_network(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SCNN");
    const auto version = r.get<std::uint16_t>();
    if (version != 1) throw FormatError(FormatErrc::unsupported_version, "SCNN version " + std::to_string(version));
    NetConfig cfg;
    cfg.trace_len = r.get<std::uint32_t>();
    const auto n_blocks = r.get<std::uint32_t>();
    r.require_elements(n_blocks, 19);
    for (std::uint32_t i = 0; i < n_blocks; ++i) {
        ConvBlockSpec b;
        b.in_channels = r.get<std::uint32_t>();
        b.out_channels = r.get<std::uint32_t>();
        b.kernel = r.get<std::uint32_t>();
        b.padding = r.get<std::uint32_t>();
        b.batch_norm = r.get<std::uint8_t>() != 0;
        b.pool = r.get<std::uint8_t>() != 0;
        b.residual = r.get<std::uint8_t>() != 0;
        cfg.blocks.push_back(b);
    }
    cfg.dense_hidden = r.get<std::uint32_t>();
    cfg.dropout_p = r.get<double>();
    cfg.n_classes = r.get<std::uint32_t>();
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(FormatErrc::value_out_of_range, std::string("network config: ") + e.what());
    }
    // Guard the allocation below against a corrupt header.
    const std::size_t dense_weights = cfg.dense_input_size() * cfg.dense_hidden;
    r.require_elements(dense_weights, sizeof(double));

    Network net(cfg, 0);
    auto read_into = [&](std::vector<double>& dst) {
        const auto n = r.get<std::uint64_t>();
        if (n != dst.size()) throw FormatError(FormatErrc::length_mismatch, "parameter size differs from config");
        dst = r.get_vector<double>(dst.size());
    };
    for (auto* p : net.parameters()) read_into(p->value);
    for (auto* buf : net.buffers()) read_into(*buf);
    r.expect_end();
    net.set_mode(Mode::eval);
    return net;
}

NetClassifier::NetClassifier(NetConfig net, TrainConfig train)
    : train_cfg_(train), net_(std::make_unique<Network>(std::move(net), train.seed)) {}

NetClassifier::NetClassifier(Network net) : net_(std::make_unique<Network>(std::move(net))) {}

void NetClassifier::fit(const Matrix& samples, std::span<const std::uint8_t> labels) {
    net_ = std::make_unique<Network>(net_->config(), train_cfg_.seed);
    history_ = train(*net_, samples, labels, train_cfg_);
}

LogProbMatrix NetClassifier::predict_log_proba(const Matrix& samples) const {
    return nn::predict_log_proba(*net_, samples);
}

}  // namespace scaforge::nn
