#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocad/matrix.hpp"
#include "ocad/rng.hpp"

namespace ocad::nn {

enum class LayerKind { Linear, BatchNorm, Relu, Sigmoid };

std::string layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t in = 0;   // Linear fan-in; BatchNorm dim; 0 for activations
    std::size_t out = 0;  // Linear fan-out; BatchNorm dim

    static LayerSpec linear(std::size_t in, std::size_t out) {
        return {LayerKind::Linear, in, out};
    }
    static LayerSpec batch_norm(std::size_t dim) { return {LayerKind::BatchNorm, dim, dim}; }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0}; }
    static LayerSpec sigmoid() { return {LayerKind::Sigmoid, 0, 0}; }

    bool operator==(const LayerSpec&) const = default;
};

// Numerical floor added to the batch variance before taking the square root.
// Small enough that normalized batches have unit variance to ~1e-9.
inline constexpr double kBatchNormEpsilon = 1e-9;
inline constexpr double kBatchNormMomentum = 0.1;

struct Layer {
    LayerSpec spec;
    // Linear: weight is (in x out) so that y = x * w + b for row-major batches.
    Matrix weight;
    std::vector<double> bias;
    // BatchNorm affine parameters and running statistics.
    std::vector<double> gamma, beta, running_mean, running_var;
};

enum class Mode { Train, Eval };

struct LayerCache {
    Matrix input;
    Matrix normalized;            // BatchNorm pre-affine output
    std::vector<double> mean;     // batch statistics used by this forward
    std::vector<double> inv_std;
    Matrix output;                // kept for Sigmoid (derivative needs y)
};

struct ForwardCache {
    Mode mode = Mode::Eval;
    std::vector<LayerSpec> shape;  // specs of the network that produced it
    std::vector<LayerCache> layers;
};

// One parameter-shaped tensor bundle per layer; used for gradients and for
// Adam moment accumulators alike.
struct LayerTensors {
    Matrix weight;
    std::vector<double> bias, gamma, beta;
};

struct Gradients {
    std::vector<LayerTensors> layers;
    Matrix input;  // d(loss)/d(batch)
};

class Network {
public:
    Network() = default;
    explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {}

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<LayerSpec> specs() const;

    // Train mode uses batch statistics and advances BatchNorm running stats;
    // eval mode reads running stats and mutates nothing. Pass a cache to make
    // the forward replayable by backward(). update_stats=false gives a
    // train-mode forward that leaves the running statistics untouched (used
    // when another network is probed without taking a step for it).
    Matrix forward(const Matrix& batch, Mode mode, ForwardCache* cache = nullptr,
                   bool update_stats = true);

    // Pure eval-mode forward.
    Matrix forward_eval(const Matrix& batch) const;

    // Exact gradients for every trainable parameter plus the batch input.
    // The cache must come from a train-mode forward through this network.
    Gradients backward(const ForwardCache& cache, const Matrix& output_grad) const;

private:
    std::vector<Layer> layers_;
};

// Builds a network with Normal(0, 0.02) linear weights, zero biases and
// identity BatchNorm (gamma 1, beta 0, running mean 0, running var 1).
Network init_network(const std::vector<LayerSpec>& specs, Rng& rng);
Network init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed);

// Validates dimensional consistency; throws DimensionError otherwise.
void validate_specs(const std::vector<LayerSpec>& specs);

enum class LossKind { L1, SmoothL1, L2 };

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

struct LossResult {
    double value = 0.0;
    Matrix grad;  // d(value)/d(x_hat)
};

// Mean-reduced reconstruction losses over all elements of the batch.
// L2 is the mean squared difference, L1 the mean absolute difference and
// SmoothL1 the quadratic-below-1 / linear-above-1 form.
LossResult reconstruction_loss(LossKind kind, const Matrix& x_hat, const Matrix& x);

struct BceResult {
    double value = 0.0;
    double dvalue_dp = 0.0;
};

// Binary cross entropy on a single probability; p is clamped into
// [1e-7, 1 - 1e-7] before the logarithm.
BceResult bce(double p, double target);

inline constexpr double kBceClamp = 1e-7;

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;  // GAN-style momentum
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<LayerTensors> first_moment;
    std::vector<LayerTensors> second_moment;

    static AdamState for_network(const Network& net, const AdamConfig& config);
};

// Standard bias-corrected Adam update, applied in place.
void adam_step(AdamState& state, Network& net, const Gradients& grads);

}  // namespace ocad::nn
