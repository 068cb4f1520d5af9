#include "ocad/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ocad/errors.hpp"

namespace ocad::nn {

namespace {

// Largest double strictly below 1; sigmoid outputs are clamped into
// [1e-300, this] so they stay strictly inside (0, 1) even when the
// exponential saturates.
const double kOneBelow = std::nextafter(1.0, 0.0);

double sigmoid(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    return std::clamp(y, 1e-300, kOneBelow);
}

void check_finite(const Matrix& m, const char* where) {
    if (!m.all_finite()) throw Error(std::string(where) + ": non-finite values");
}

}  // namespace

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Linear: return "linear";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::Relu: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
    }
    return "unknown";
}

void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw DimensionError("network needs at least one layer");
    std::size_t dim = 0;
    bool dim_known = false;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        switch (s.kind) {
            case LayerKind::Linear:
                if (s.in == 0 || s.out == 0) throw DimensionError("linear layer with zero dimension");
                if (dim_known && dim != s.in) {
                    throw DimensionError("layer " + std::to_string(i) + ": expected input dim " +
                                         std::to_string(dim) + ", spec says " + std::to_string(s.in));
                }
                dim = s.out;
                dim_known = true;
                break;
            case LayerKind::BatchNorm:
                if (s.in == 0 || s.in != s.out) throw DimensionError("batch_norm dims inconsistent");
                if (dim_known && dim != s.in) {
                    throw DimensionError("layer " + std::to_string(i) + ": batch_norm dim " +
                                         std::to_string(s.in) + " does not match " + std::to_string(dim));
                }
                dim = s.in;
                dim_known = true;
                break;
            case LayerKind::Relu:
                break;
            case LayerKind::Sigmoid:
                if (i + 1 != specs.size()) throw DimensionError("sigmoid allowed only as final layer");
                break;
        }
    }
    if (!dim_known) throw DimensionError("network has no layer with a declared dimension");
}

std::size_t Network::input_dim() const {
    for (const Layer& l : layers_) {
        if (l.spec.kind == LayerKind::Linear || l.spec.kind == LayerKind::BatchNorm) return l.spec.in;
    }
    return 0;
}

std::size_t Network::output_dim() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        if (it->spec.kind == LayerKind::Linear || it->spec.kind == LayerKind::BatchNorm)
            return it->spec.out;
    }
    return 0;
}

std::vector<LayerSpec> Network::specs() const {
    std::vector<LayerSpec> out;
    out.reserve(layers_.size());
    for (const Layer& l : layers_) out.push_back(l.spec);
    return out;
}

Network init_network(const std::vector<LayerSpec>& specs, Rng& rng) {
    validate_specs(specs);
    std::vector<Layer> layers;
    layers.reserve(specs.size());
    for (const LayerSpec& s : specs) {
        Layer layer;
        layer.spec = s;
        if (s.kind == LayerKind::Linear) {
            layer.weight = Matrix(s.in, s.out);
            for (double& w : layer.weight.data) w = rng.normal(0.0, 0.02);
            layer.bias.assign(s.out, 0.0);
        } else if (s.kind == LayerKind::BatchNorm) {
            layer.gamma.assign(s.in, 1.0);
            layer.beta.assign(s.in, 0.0);
            layer.running_mean.assign(s.in, 0.0);
            layer.running_var.assign(s.in, 1.0);
        }
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
}

Network init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    Rng rng(seed);
    return init_network(specs, rng);
}

Matrix Network::forward(const Matrix& batch, Mode mode, ForwardCache* cache, bool update_stats) {
    if (batch.cols != input_dim()) {
        throw DimensionError("forward: batch has " + std::to_string(batch.cols) +
                             " columns, network expects " + std::to_string(input_dim()));
    }
    if (cache) {
        cache->mode = mode;
        cache->shape = specs();
        cache->layers.assign(layers_.size(), LayerCache{});
    }

    Matrix x = batch;
    const std::size_t m = batch.rows;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        Layer& layer = layers_[li];
        LayerCache* lc = cache ? &cache->layers[li] : nullptr;
        if (lc) lc->input = x;

        switch (layer.spec.kind) {
            case LayerKind::Linear: {
                Matrix y = matmul(x, layer.weight);
                for (std::size_t i = 0; i < y.rows; ++i) {
                    double* row = y.data.data() + i * y.cols;
                    for (std::size_t j = 0; j < y.cols; ++j) row[j] += layer.bias[j];
                }
                x = std::move(y);
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t dim = layer.spec.in;
                Matrix y(m, dim);
                if (mode == Mode::Train) {
                    if (m < 2) {
                        throw DimensionError(
                            "batch_norm: train mode needs batch of at least 2 rows "
                            "(batch variance undefined)");
                    }
                    std::vector<double> mean(dim, 0.0), var(dim, 0.0), inv_std(dim, 0.0);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* row = x.data.data() + i * dim;
                        for (std::size_t j = 0; j < dim; ++j) mean[j] += row[j];
                    }
                    for (std::size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(m);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* row = x.data.data() + i * dim;
                        for (std::size_t j = 0; j < dim; ++j) {
                            const double d = row[j] - mean[j];
                            var[j] += d * d;
                        }
                    }
                    for (std::size_t j = 0; j < dim; ++j) var[j] /= static_cast<double>(m);
                    for (std::size_t j = 0; j < dim; ++j)
                        inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEpsilon);

                    Matrix normalized(m, dim);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* row = x.data.data() + i * dim;
                        double* nrow = normalized.data.data() + i * dim;
                        double* yrow = y.data.data() + i * dim;
                        for (std::size_t j = 0; j < dim; ++j) {
                            nrow[j] = (row[j] - mean[j]) * inv_std[j];
                            yrow[j] = layer.gamma[j] * nrow[j] + layer.beta[j];
                        }
                    }
                    if (update_stats) {
                        // Exponential running average with unbiased variance.
                        const double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
                        for (std::size_t j = 0; j < dim; ++j) {
                            layer.running_mean[j] =
                                (1.0 - kBatchNormMomentum) * layer.running_mean[j] +
                                kBatchNormMomentum * mean[j];
                            layer.running_var[j] =
                                (1.0 - kBatchNormMomentum) * layer.running_var[j] +
                                kBatchNormMomentum * (var[j] * unbias);
                        }
                    }
                    if (lc) {
                        lc->normalized = normalized;
                        lc->mean = std::move(mean);
                        lc->inv_std = std::move(inv_std);
                    }
                } else {
                    std::vector<double> inv(dim);
                    for (std::size_t j = 0; j < dim; ++j)
                        inv[j] = 1.0 / std::sqrt(layer.running_var[j] + kBatchNormEpsilon);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* row = x.data.data() + i * dim;
                        double* yrow = y.data.data() + i * dim;
                        for (std::size_t j = 0; j < dim; ++j) {
                            yrow[j] = layer.gamma[j] * (row[j] - layer.running_mean[j]) * inv[j] +
                                      layer.beta[j];
                        }
                    }
                }
                x = std::move(y);
                break;
            }
            case LayerKind::Relu: {
                for (double& v : x.data) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerKind::Sigmoid: {
                for (double& v : x.data) v = sigmoid(v);
                if (lc) lc->output = x;
                break;
            }
        }
    }
    check_finite(x, "forward");
    if (cache && !cache->layers.empty()) cache->layers.back().output = x;
    return x;
}

Matrix Network::forward_eval(const Matrix& batch) const {
    // Eval mode never mutates, so the const_cast cannot be observed.
    return const_cast<Network*>(this)->forward(batch, Mode::Eval, nullptr);
}

Gradients Network::backward(const ForwardCache& cache, const Matrix& output_grad) const {
    if (cache.mode != Mode::Train)
        throw Error("backward: cache must come from a train-mode forward");
    if (cache.shape != specs())
        throw Error("backward: cache does not match this network");
    if (cache.layers.size() != layers_.size())
        throw Error("backward: cache layer count mismatch");

    Gradients grads;
    grads.layers.assign(layers_.size(), LayerTensors{});

    Matrix delta = output_grad;
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
        const Layer& layer = layers_[idx];
        const LayerCache& lc = cache.layers[idx];
        LayerTensors& lt = grads.layers[idx];

        switch (layer.spec.kind) {
            case LayerKind::Linear: {
                if (delta.cols != layer.spec.out)
                    throw Error("backward: gradient shape does not match layer output");
                lt.weight = matmul_at_b(lc.input, delta);  // (in x out)
                lt.bias.assign(layer.spec.out, 0.0);
                for (std::size_t i = 0; i < delta.rows; ++i) {
                    const double* row = delta.data.data() + i * delta.cols;
                    for (std::size_t j = 0; j < delta.cols; ++j) lt.bias[j] += row[j];
                }
                delta = matmul_a_bt(delta, layer.weight);  // (m x in)
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t dim = layer.spec.in;
                const std::size_t m = delta.rows;
                const double dm = static_cast<double>(m);
                lt.gamma.assign(dim, 0.0);
                lt.beta.assign(dim, 0.0);
                // Accumulate per-column sums of dxhat and dxhat*xhat.
                std::vector<double> sum_dxhat(dim, 0.0), sum_dxhat_xhat(dim, 0.0);
                Matrix dxhat(m, dim);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* drow = delta.data.data() + i * dim;
                    const double* nrow = lc.normalized.data.data() + i * dim;
                    double* dxrow = dxhat.data.data() + i * dim;
                    for (std::size_t j = 0; j < dim; ++j) {
                        lt.gamma[j] += drow[j] * nrow[j];
                        lt.beta[j] += drow[j];
                        dxrow[j] = drow[j] * layer.gamma[j];
                        sum_dxhat[j] += dxrow[j];
                        sum_dxhat_xhat[j] += dxrow[j] * nrow[j];
                    }
                }
                // dx = (inv_std / m) * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                Matrix dx(m, dim);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* dxrow = dxhat.data.data() + i * dim;
                    const double* nrow = lc.normalized.data.data() + i * dim;
                    double* out = dx.data.data() + i * dim;
                    for (std::size_t j = 0; j < dim; ++j) {
                        out[j] = lc.inv_std[j] / dm *
                                 (dm * dxrow[j] - sum_dxhat[j] - nrow[j] * sum_dxhat_xhat[j]);
                    }
                }
                delta = std::move(dx);
                break;
            }
            case LayerKind::Relu: {
                for (std::size_t i = 0; i < delta.data.size(); ++i) {
                    if (lc.input.data[i] <= 0.0) delta.data[i] = 0.0;
                }
                break;
            }
            case LayerKind::Sigmoid: {
                for (std::size_t i = 0; i < delta.data.size(); ++i) {
                    const double y = lc.output.data[i];
                    delta.data[i] *= y * (1.0 - y);
                }
                break;
            }
        }
    }
    grads.input = std::move(delta);
    return grads;
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::L1: return "l1";
        case LossKind::SmoothL1: return "smoothl1";
        case LossKind::L2: return "l2";
    }
    return "unknown";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "l1") return LossKind::L1;
    if (name == "smoothl1") return LossKind::SmoothL1;
    if (name == "l2") return LossKind::L2;
    throw ConfigError("unknown loss kind: " + name);
}

LossResult reconstruction_loss(LossKind kind, const Matrix& x_hat, const Matrix& x) {
    if (!x_hat.same_shape(x)) throw DimensionError("reconstruction_loss: shape mismatch");
    const double n = static_cast<double>(x_hat.data.size());
    LossResult result;
    result.grad = Matrix(x_hat.rows, x_hat.cols);
    double total = 0.0;
    for (std::size_t i = 0; i < x_hat.data.size(); ++i) {
        const double d = x_hat.data[i] - x.data[i];
        switch (kind) {
            case LossKind::L2:
                total += d * d;
                result.grad.data[i] = 2.0 * d / n;
                break;
            case LossKind::L1:
                total += std::abs(d);
                result.grad.data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
                break;
            case LossKind::SmoothL1:
                if (std::abs(d) < 1.0) {
                    total += 0.5 * d * d;
                    result.grad.data[i] = d / n;
                } else {
                    total += std::abs(d) - 0.5;
                    result.grad.data[i] = (d > 0.0 ? 1.0 : -1.0) / n;
                }
                break;
        }
    }
    result.value = total / n;
    return result;
}

BceResult bce(double p, double target) {
    const double q = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    BceResult r;
    r.value = -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
    r.dvalue_dp = -target / q + (1.0 - target) / (1.0 - q);
    return r;
}

AdamState AdamState::for_network(const Network& net, const AdamConfig& config) {
    AdamState state;
    state.config = config;
    for (const Layer& layer : net.layers()) {
        LayerTensors zero;
        if (layer.spec.kind == LayerKind::Linear) {
            zero.weight = Matrix(layer.weight.rows, layer.weight.cols);
            zero.bias.assign(layer.bias.size(), 0.0);
        } else if (layer.spec.kind == LayerKind::BatchNorm) {
            zero.gamma.assign(layer.gamma.size(), 0.0);
            zero.beta.assign(layer.beta.size(), 0.0);
        }
        state.first_moment.push_back(zero);
        state.second_moment.push_back(zero);
    }
    return state;
}

namespace {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamConfig& cfg, double bias1, double bias2) {
    if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
        throw DimensionError("adam_step: parameter/gradient shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

}  // namespace

void adam_step(AdamState& state, Network& net, const Gradients& grads) {
    if (grads.layers.size() != net.layers().size() ||
        state.first_moment.size() != net.layers().size())
        throw DimensionError("adam_step: state/network/gradient layer counts differ");
    state.step += 1;
    const double bias1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        Layer& layer = net.layers()[li];
        const LayerTensors& g = grads.layers[li];
        LayerTensors& m = state.first_moment[li];
        LayerTensors& v = state.second_moment[li];
        if (layer.spec.kind == LayerKind::Linear) {
            adam_update(layer.weight.data, g.weight.data, m.weight.data, v.weight.data,
                        state.config, bias1, bias2);
            adam_update(layer.bias, g.bias, m.bias, v.bias, state.config, bias1, bias2);
        } else if (layer.spec.kind == LayerKind::BatchNorm) {
            adam_update(layer.gamma, g.gamma, m.gamma, v.gamma, state.config, bias1, bias2);
            adam_update(layer.beta, g.beta, m.beta, v.beta, state.config, bias1, bias2);
        }
    }
}

}  // namespace ocad::nn
