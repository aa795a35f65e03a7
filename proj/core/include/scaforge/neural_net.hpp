#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scaforge/classifier.hpp"
#include "scaforge/matrix.hpp"

namespace scaforge::nn {

enum class Mode { train, eval };

/// Activations laid out as [batch][channel][time].
struct Tensor {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t b, std::size_t c, std::size_t l, double fill = 0.0)
        : batch(b), channels(c), length(l), data(b * c * l, fill) {}

    double& at(std::size_t b, std::size_t c, std::size_t t) { return data[(b * channels + c) * length + t]; }
    double at(std::size_t b, std::size_t c, std::size_t t) const { return data[(b * channels + c) * length + t]; }
    /// Contiguous time series of one (sample, channel) pair.
    std::span<double> series(std::size_t b, std::size_t c) { return {data.data() + (b * channels + c) * length, length}; }
    std::span<const double> series(std::size_t b, std::size_t c) const {
        return {data.data() + (b * channels + c) * length, length};
    }
    bool same_shape(const Tensor& o) const { return batch == o.batch && channels == o.channels && length == o.length; }
};

struct Parameter {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string n, std::size_t size) : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Layer {
public:
    virtual ~Layer() = default;
    /// Caches whatever backward() needs.
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    /// Accumulates parameter gradients and returns d(loss)/d(input).
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void collect_parameters(std::vector<Parameter*>&) {}
    virtual void collect_buffers(std::vector<std::vector<double>*>&) {}
    virtual std::string name() const = 0;
};

class Conv1d final : public Layer {
public:
    Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t padding);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_parameters(std::vector<Parameter*>& out) override { out.push_back(&weight); out.push_back(&bias); }
    std::string name() const override { return "conv1d"; }

    std::size_t in_channels, out_channels, kernel, padding;
    Parameter weight;  // [out][in][kernel]
    Parameter bias;    // [out]

private:
    Tensor input_;
};

class BatchNorm1d final : public Layer {
public:
    explicit BatchNorm1d(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_parameters(std::vector<Parameter*>& out) override { out.push_back(&gamma); out.push_back(&beta); }
    void collect_buffers(std::vector<std::vector<double>*>& out) override {
        out.push_back(&running_mean);
        out.push_back(&running_var);
    }
    std::string name() const override { return "batchnorm1d"; }

    std::size_t channels;
    double eps, momentum;
    Parameter gamma, beta;
    std::vector<double> running_mean, running_var;

private:
    Tensor normalized_;
    std::vector<double> inv_std_;
    Mode mode_ = Mode::train;
};

class ReLU final : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string name() const override { return "relu"; }

private:
    Tensor output_;
};

/// Kernel 2, stride 2; a trailing odd sample is dropped.
class AvgPool1d final : public Layer {
public:
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string name() const override { return "avgpool1d"; }

private:
    std::size_t in_length_ = 0;
};

/// Fully connected layer over the flattened (channel, time) features.
class Dense final : public Layer {
public:
    Dense(std::size_t in_features, std::size_t out_features);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_parameters(std::vector<Parameter*>& out) override { out.push_back(&weight); out.push_back(&bias); }
    std::string name() const override { return "dense"; }

    std::size_t in_features, out_features;
    Parameter weight;  // [out][in]
    Parameter bias;

private:
    Tensor input_;
};

/// Inverted dropout: train mode zeroes with probability p and scales
/// survivors by 1/(1-p); eval mode is the identity.
class Dropout final : public Layer {
public:
    Dropout(double p, std::shared_ptr<std::mt19937_64> rng) : p(p), rng_(std::move(rng)) {}

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string name() const override { return "dropout"; }

    double p;

private:
    std::shared_ptr<std::mt19937_64> rng_;
    std::vector<double> mask_;
};

/// ReLU(main(x) + shortcut(x)) with main = conv-BN-ReLU-conv-BN and the
/// shortcut an identity, or a 1x1 convolution when channel counts differ.
class ResidualBlock final : public Layer {
public:
    ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t padding,
                  bool batch_norm);

    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_parameters(std::vector<Parameter*>& out) override;
    void collect_buffers(std::vector<std::vector<double>*>& out) override;
    std::string name() const override { return "residual"; }

    bool has_projection() const { return shortcut != nullptr; }

    std::unique_ptr<Conv1d> conv1, conv2;
    std::unique_ptr<BatchNorm1d> bn1, bn2;
    std::unique_ptr<Conv1d> shortcut;

private:
    ReLU inner_relu_, out_relu_;
};

struct ConvBlockSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 11;
    std::size_t padding = 5;
    bool batch_norm = true;
    bool pool = true;  // AvgPool1d(2, 2) after the block
    bool residual = false;
};

struct NetConfig {
    std::size_t trace_len = 0;
    std::vector<ConvBlockSpec> blocks;
    std::size_t dense_hidden = 4096;
    double dropout_p = 0.5;
    std::size_t n_classes = kNumClasses;

    /// Blocks chained with the given output channels.
    static NetConfig make(std::size_t trace_len, std::span<const std::size_t> channels, bool residual,
                          std::size_t dense_hidden, double dropout_p, std::size_t kernel = 11);
    /// Four blocks of 64/128/256/512 channels, dense 4096, dropout 0.5.
    static NetConfig full_cnn(std::size_t trace_len);
    static NetConfig full_resnet(std::size_t trace_len);
    /// Channels 8/16/16/32 and dense 128 for fast local training.
    static NetConfig desk_cnn(std::size_t trace_len);
    static NetConfig desk_resnet(std::size_t trace_len);

    /// Length after all pooling stages.
    std::size_t final_length() const;
    std::size_t dense_input_size() const;
    bool residual() const;
    void validate() const;
};

/// Length after `n_blocks` floor-halvings times `last_channels`.
std::size_t flatten_size(std::size_t trace_len, std::size_t n_blocks, std::size_t last_channels);

class Network {
public:
    /// Uniform fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
    /// conv and dense weights and biases; batch norm starts at gain 1, offset 0.
    Network(NetConfig cfg, std::uint64_t init_seed);

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    const NetConfig& config() const { return cfg_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }
    void reseed_dropout(std::uint64_t seed) { dropout_rng_->seed(seed); }

    /// Logits, batch x n_classes.
    Matrix forward(const Matrix& batch);
    /// Backpropagates d(loss)/d(logits) through the last forward pass.
    void backward(const Matrix& grad_logits);

    std::vector<Parameter*> parameters();
    std::vector<std::vector<double>*> buffers();
    void zero_grad();

    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

private:
    NetConfig cfg_;
    Mode mode_ = Mode::train;
    std::shared_ptr<std::mt19937_64> dropout_rng_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Mean softmax cross-entropy; fills `grad` with d(loss)/d(logits) when given.
double softmax_cross_entropy(const Matrix& logits, std::span<const std::uint8_t> labels, Matrix* grad = nullptr);

/// Zeroes gradients, runs forward + backward in train mode, returns the loss.
double loss_and_grad(Network& net, const Matrix& batch, std::span<const std::uint8_t> labels);

struct RmsPropConfig {
    double lr = 1e-5;
    double weight_decay = 1e-5;
    double decay_rate = 0.99;
    double eps = 1e-8;
};

/// s <- rho*s + (1-rho)*g^2;  w <- w - lr*g/(sqrt(s)+eps) - lr*wd*w.
class RmsProp {
public:
    explicit RmsProp(RmsPropConfig cfg) : cfg_(cfg) {}
    void step(std::span<Parameter* const> params);

private:
    RmsPropConfig cfg_;
    std::vector<std::vector<double>> square_avg_;
};

struct TrainConfig {
    RmsPropConfig optimizer;
    std::size_t batch_size = 100;
    std::size_t epochs = 150;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;       // one entry per epoch
    std::vector<double> validation_loss;  // empty without a validation split
};

/// Seeded split, per-epoch shuffling, and dropout; the final partial batch is kept.
TrainHistory train(Network& net, const Matrix& samples, std::span<const std::uint8_t> labels, const TrainConfig& cfg);

/// Eval-mode log-softmax of the logits. The network's mode is restored afterwards.
LogProbMatrix predict_log_proba(Network& net, const Matrix& samples);

std::vector<std::uint8_t> encode_network(Network& net);
Network decode_network(std::span<const std::uint8_t> bytes);

class NetClassifier final : public ProbClassifier {
public:
    NetClassifier(NetConfig net, TrainConfig train);
    explicit NetClassifier(Network net);

    void fit(const Matrix& samples, std::span<const std::uint8_t> labels) override;
    LogProbMatrix predict_log_proba(const Matrix& samples) const override;
    std::string name() const override { return net_->config().residual() ? "resnet" : "cnn"; }

    Network& network() { return *net_; }
    const TrainHistory& history() const { return history_; }

private:
    TrainConfig train_cfg_;
    std::unique_ptr<Network> net_;
    TrainHistory history_;
};

}  // namespace scaforge::nn
