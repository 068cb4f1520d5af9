#include <doctest.h>

#include <cmath>
#include <vector>

#include "ocad/errors.hpp"
#include "ocad/nn.hpp"

using namespace ocad;
using nn::LayerKind;
using nn::LayerSpec;
using nn::LossKind;
using nn::Mode;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng, double scale = 2.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

std::vector<LayerSpec> mlp_specs() {
    return {LayerSpec::linear(28, 16), LayerSpec::batch_norm(16), LayerSpec::relu(),
            LayerSpec::linear(16, 8),  LayerSpec::batch_norm(8),  LayerSpec::relu(),
            LayerSpec::linear(8, 28)};
}

std::vector<LayerSpec> sigmoid_specs() {
    return {LayerSpec::linear(28, 8), LayerSpec::batch_norm(8), LayerSpec::relu(),
            LayerSpec::linear(8, 1), LayerSpec::sigmoid()};
}

// Scalar probe loss: sum(forward(batch) * probe), so d(loss)/d(output) = probe.
// Also reports the ReLU activation pattern; finite differences are only valid
// for probes that do not flip any ReLU unit.
double probe_loss(nn::Network net, const Matrix& batch, const Matrix& probe,
                  std::vector<bool>* relu_mask = nullptr) {
    nn::ForwardCache cache;
    const Matrix out = net.forward(batch, Mode::Train, &cache);
    if (relu_mask) {
        relu_mask->clear();
        for (std::size_t li = 0; li < cache.shape.size(); ++li) {
            if (cache.shape[li].kind != LayerKind::Relu) continue;
            for (double v : cache.layers[li].input.data) relu_mask->push_back(v > 0.0);
        }
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) loss += out.data[i] * probe.data[i];
    return loss;
}

double rel_err(double a, double b) {
    // The floor keeps finite-difference roundoff noise out of the ratio for
    // near-zero gradients; real gradient bugs show up at gradient scale.
    return std::abs(a - b) / std::max(1e-4, std::abs(a) + std::abs(b));
}

// Central finite differences over every trainable parameter and the input.
void check_gradients(const nn::Network& net, const Matrix& batch, Rng& rng, double tol = 1e-4) {
    const double h = 1e-5;
    nn::Network work = net;
    nn::ForwardCache cache;
    const Matrix out = work.forward(batch, Mode::Train, &cache);
    Matrix probe(out.rows, out.cols);
    for (double& v : probe.data) v = rng.normal();
    const nn::Gradients grads = work.backward(cache, probe);

    std::vector<bool> base_mask, up_mask, down_mask;
    probe_loss(work, batch, probe, &base_mask);
    std::size_t checked = 0;

    auto fd_check = [&](double* param, double analytic) {
        const double saved = *param;
        *param = saved + h;
        const double up = probe_loss(work, batch, probe, &up_mask);
        *param = saved - h;
        const double down = probe_loss(work, batch, probe, &down_mask);
        *param = saved;
        if (up_mask != base_mask || down_mask != base_mask) return;  // kink straddle
        ++checked;
        const double fd = (up - down) / (2.0 * h);
        CAPTURE(analytic);
        CAPTURE(fd);
        CHECK(rel_err(analytic, fd) < tol);
    };

    for (std::size_t li = 0; li < work.layers().size(); ++li) {
        auto& layer = work.layers()[li];
        const auto& g = grads.layers[li];
        if (layer.spec.kind == LayerKind::Linear) {
            for (std::size_t i = 0; i < layer.weight.data.size(); ++i)
                fd_check(&layer.weight.data[i], g.weight.data[i]);
            for (std::size_t i = 0; i < layer.bias.size(); ++i)
                fd_check(&layer.bias[i], g.bias[i]);
        } else if (layer.spec.kind == LayerKind::BatchNorm) {
            for (std::size_t i = 0; i < layer.gamma.size(); ++i)
                fd_check(&layer.gamma[i], g.gamma[i]);
            for (std::size_t i = 0; i < layer.beta.size(); ++i)
                fd_check(&layer.beta[i], g.beta[i]);
        }
    }

    // Input gradients through the whole stack.
    Matrix x = batch;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double saved = x.data[i];
        x.data[i] = saved + h;
        const double up = probe_loss(work, x, probe, &up_mask);
        x.data[i] = saved - h;
        const double down = probe_loss(work, x, probe, &down_mask);
        x.data[i] = saved;
        if (up_mask != base_mask || down_mask != base_mask) continue;
        ++checked;
        CHECK(rel_err(grads.input.data[i], (up - down) / (2.0 * h)) < tol);
    }
    CHECK(checked > batch.data.size());  // the vast majority of probes ran
}

}  // namespace

TEST_CASE("init_network is deterministic under a seed") {
    const auto a = nn::init_network(mlp_specs(), std::uint64_t{42});
    const auto b = nn::init_network(mlp_specs(), std::uint64_t{42});
    REQUIRE(a.layers().size() == b.layers().size());
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        CHECK(a.layers()[i].weight.data == b.layers()[i].weight.data);
        CHECK(a.layers()[i].bias == b.layers()[i].bias);
        CHECK(a.layers()[i].gamma == b.layers()[i].gamma);
    }
    const auto c = nn::init_network(mlp_specs(), std::uint64_t{43});
    CHECK(a.layers()[0].weight.data != c.layers()[0].weight.data);
}

TEST_CASE("init_network batch_norm starts as identity") {
    const auto net = nn::init_network({LayerSpec::batch_norm(8)}, std::uint64_t{1});
    const auto& layer = net.layers()[0];
    for (double g : layer.gamma) CHECK(g == 1.0);
    for (double b : layer.beta) CHECK(b == 0.0);
    for (double m : layer.running_mean) CHECK(m == 0.0);
    for (double v : layer.running_var) CHECK(v == 1.0);
}

TEST_CASE("init_network linear weights follow Normal(0, 0.02)") {
    const auto net = nn::init_network({LayerSpec::linear(28, 16)}, std::uint64_t{7});
    const auto& w = net.layers()[0].weight.data;
    REQUIRE(w.size() == 448);
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= 448.0;
    CHECK(std::abs(mean) < 3.0 * 0.02 / std::sqrt(448.0));
    double var = 0.0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= 448.0;
    CHECK(var == doctest::Approx(0.02 * 0.02).epsilon(0.3));
    for (double b : net.layers()[0].bias) CHECK(b == 0.0);
}

TEST_CASE("init_network rejects inconsistent specs") {
    CHECK_THROWS_AS(nn::init_network({LayerSpec::linear(28, 16), LayerSpec::linear(8, 4)},
                                     std::uint64_t{0}),
                    DimensionError);
    CHECK_THROWS_AS(nn::init_network({LayerSpec::linear(28, 16), LayerSpec::batch_norm(8)},
                                     std::uint64_t{0}),
                    DimensionError);
    CHECK_THROWS_AS(
        nn::init_network({LayerSpec::sigmoid(), LayerSpec::linear(4, 4)}, std::uint64_t{0}),
        DimensionError);
    CHECK_THROWS_AS(nn::init_network({}, std::uint64_t{0}), DimensionError);
}

TEST_CASE("linear layer with identity weights maps input to itself") {
    auto net = nn::init_network({LayerSpec::linear(4, 4)}, std::uint64_t{3});
    auto& layer = net.layers()[0];
    layer.weight = Matrix(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) layer.weight(i, i) = 1.0;
    layer.bias.assign(4, 0.0);
    Rng rng(11);
    const Matrix x = random_batch(5, 4, rng);
    const Matrix y = net.forward_eval(x);
    CHECK(y.data == x.data);
}

TEST_CASE("sigmoid of zero pre-activations is one half") {
    auto net = nn::init_network({LayerSpec::linear(4, 3), LayerSpec::sigmoid()}, std::uint64_t{3});
    net.layers()[0].weight = Matrix(4, 3, 0.0);
    Rng rng(5);
    const Matrix y = net.forward_eval(random_batch(6, 4, rng));
    for (double v : y.data) CHECK(v == 0.5);
}

TEST_CASE("batch_norm train mode normalizes each column") {
    auto net = nn::init_network({LayerSpec::batch_norm(8)}, std::uint64_t{2});
    Rng rng(17);
    const std::size_t m = 64;
    const Matrix x = random_batch(m, 8, rng, 3.0);
    const Matrix y = net.forward(x, Mode::Train);
    for (std::size_t j = 0; j < 8; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += y(i, j);
        mean /= static_cast<double>(m);
        CHECK(std::abs(mean) < 1e-10);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
        var /= static_cast<double>(m);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batch_norm running stats move with momentum 0.1") {
    auto net = nn::init_network({LayerSpec::batch_norm(4)}, std::uint64_t{2});
    Rng rng(23);
    const std::size_t m = 32;
    const Matrix x = random_batch(m, 4, rng, 2.0);
    net.forward(x, Mode::Train);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) mean += x(i, j);
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
        var /= static_cast<double>(m);
        const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
        CHECK(net.layers()[0].running_mean[j] == doctest::Approx(0.1 * mean).epsilon(1e-12));
        CHECK(net.layers()[0].running_var[j] ==
              doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-12));
        CHECK(net.layers()[0].running_var[j] > 0.0);
    }
}

TEST_CASE("batch_norm rejects train-mode batches of one row") {
    auto net = nn::init_network({LayerSpec::batch_norm(4)}, std::uint64_t{2});
    const Matrix x(1, 4, 0.5);
    CHECK_THROWS_AS(net.forward(x, Mode::Train), DimensionError);
    CHECK_NOTHROW(net.forward(x, Mode::Eval));
}

TEST_CASE("eval-mode forward never mutates the network") {
    auto net = nn::init_network(mlp_specs(), std::uint64_t{9});
    Rng rng(31);
    const Matrix x = random_batch(16, 28, rng);
    // Move the stats away from init first.
    net.forward(x, Mode::Train);
    const auto before = net.layers();
    const Matrix y1 = net.forward(x, Mode::Eval);
    const Matrix y2 = net.forward_eval(x);
    CHECK(y1.data == y2.data);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(net.layers()[i].weight.data == before[i].weight.data);
        CHECK(net.layers()[i].running_mean == before[i].running_mean);
        CHECK(net.layers()[i].running_var == before[i].running_var);
    }
}

TEST_CASE("forward with update_stats=false keeps running statistics") {
    auto net = nn::init_network(mlp_specs(), std::uint64_t{9});
    Rng rng(37);
    const Matrix x = random_batch(8, 28, rng);
    const auto before = net.layers();
    nn::ForwardCache cache;
    net.forward(x, Mode::Train, &cache, /*update_stats=*/false);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(net.layers()[i].running_mean == before[i].running_mean);
        CHECK(net.layers()[i].running_var == before[i].running_var);
    }
}

TEST_CASE("sigmoid and relu outputs stay in range") {
    auto net = nn::init_network(sigmoid_specs(), std::uint64_t{13});
    Rng rng(41);
    const Matrix x = random_batch(32, 28, rng, 10.0);
    const Matrix y = net.forward(x, Mode::Train);
    for (double v : y.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    auto relu_net = nn::init_network({LayerSpec::linear(28, 8), LayerSpec::relu()}, std::uint64_t{13});
    const Matrix r = relu_net.forward_eval(x);
    for (double v : r.data) CHECK(v >= 0.0);
}

TEST_CASE("forward rejects wrong input width") {
    auto net = nn::init_network(mlp_specs(), std::uint64_t{1});
    CHECK_THROWS_AS(net.forward_eval(Matrix(3, 5, 1.0)), DimensionError);
}

TEST_CASE("backward with zero output gradient gives zero parameter gradients") {
    auto net = nn::init_network(mlp_specs(), std::uint64_t{5});
    Rng rng(43);
    const Matrix x = random_batch(6, 28, rng);
    nn::ForwardCache cache;
    const Matrix out = net.forward(x, Mode::Train, &cache);
    const auto grads = net.backward(cache, Matrix(out.rows, out.cols, 0.0));
    for (const auto& g : grads.layers) {
        for (double v : g.weight.data) CHECK(v == 0.0);
        for (double v : g.bias) CHECK(v == 0.0);
        for (double v : g.gamma) CHECK(v == 0.0);
        for (double v : g.beta) CHECK(v == 0.0);
    }
    for (double v : grads.input.data) CHECK(v == 0.0);
}

TEST_CASE("backward requires a train-mode cache from the same network") {
    auto net = nn::init_network(mlp_specs(), std::uint64_t{5});
    Rng rng(47);
    const Matrix x = random_batch(4, 28, rng);
    nn::ForwardCache eval_cache;
    net.forward(x, Mode::Eval, &eval_cache);
    CHECK_THROWS_AS(net.backward(eval_cache, Matrix(4, 28, 1.0)), Error);

    nn::ForwardCache cache;
    net.forward(x, Mode::Train, &cache);
    auto other = nn::init_network(sigmoid_specs(), std::uint64_t{5});
    CHECK_THROWS_AS(other.backward(cache, Matrix(4, 28, 1.0)), Error);
}

TEST_CASE("relu blocks gradient at negative pre-activations") {
    auto net = nn::init_network({LayerSpec::linear(2, 2), LayerSpec::relu()}, std::uint64_t{1});
    auto& layer = net.layers()[0];
    layer.weight = Matrix(2, 2, 0.0);
    layer.weight(0, 0) = 1.0;
    layer.weight(1, 1) = 1.0;
    Matrix x(2, 2);
    x(0, 0) = -3.0;  // negative pre-activation on column 0
    x(0, 1) = 2.0;
    x(1, 0) = -1.0;
    x(1, 1) = 4.0;
    nn::ForwardCache cache;
    net.forward(x, Mode::Train, &cache);
    const auto grads = net.backward(cache, Matrix(2, 2, 1.0));
    CHECK(grads.input(0, 0) == 0.0);
    CHECK(grads.input(1, 0) == 0.0);
    CHECK(grads.input(0, 1) == 1.0);
    CHECK(grads.input(1, 1) == 1.0);
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(101);
    SUBCASE("bottlenecked autoencoder shape") {
        const auto net = nn::init_network(mlp_specs(), std::uint64_t{11});
        check_gradients(net, random_batch(4, 28, rng), rng);
    }
    SUBCASE("sigmoid classifier shape") {
        const auto net = nn::init_network(sigmoid_specs(), std::uint64_t{12});
        check_gradients(net, random_batch(5, 28, rng), rng);
    }
}

TEST_CASE("reconstruction losses: value and gradient basics") {
    Matrix x(1, 28, 0.0);
    Matrix x_hat(1, 28, 0.0);

    SUBCASE("perfect reconstruction is zero") {
        for (auto kind : {LossKind::L1, LossKind::SmoothL1, LossKind::L2}) {
            const auto r = nn::reconstruction_loss(kind, x_hat, x);
            CHECK(r.value == 0.0);
            for (double g : r.grad.data) CHECK(g == 0.0);
        }
    }
    SUBCASE("single difference of 2 over 28 features") {
        x_hat(0, 0) = 2.0;
        CHECK(nn::reconstruction_loss(LossKind::L2, x_hat, x).value ==
              doctest::Approx(4.0 / 28.0).epsilon(1e-12));
        CHECK(nn::reconstruction_loss(LossKind::L1, x_hat, x).value ==
              doctest::Approx(2.0 / 28.0).epsilon(1e-12));
        // SmoothL1: |d| = 2 >= 1, so the linear branch: 2 - 0.5 = 1.5
        CHECK(nn::reconstruction_loss(LossKind::SmoothL1, x_hat, x).value ==
              doctest::Approx(1.5 / 28.0).epsilon(1e-12));
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(nn::reconstruction_loss(LossKind::L2, Matrix(1, 27), x), DimensionError);
    }
}

TEST_CASE("reconstruction loss gradients match finite differences") {
    Rng rng(59);
    Matrix x = random_batch(3, 7, rng);
    Matrix x_hat = random_batch(3, 7, rng);
    const double h = 1e-6;
    for (auto kind : {LossKind::L1, LossKind::SmoothL1, LossKind::L2}) {
        const auto base = nn::reconstruction_loss(kind, x_hat, x);
        for (std::size_t i = 0; i < x_hat.data.size(); ++i) {
            const double saved = x_hat.data[i];
            x_hat.data[i] = saved + h;
            const double up = nn::reconstruction_loss(kind, x_hat, x).value;
            x_hat.data[i] = saved - h;
            const double down = nn::reconstruction_loss(kind, x_hat, x).value;
            x_hat.data[i] = saved;
            CHECK(rel_err(base.grad.data[i], (up - down) / (2.0 * h)) < 1e-4);
        }
    }
}

TEST_CASE("losses are non-negative and zero only at equality") {
    Rng rng(61);
    const Matrix x = random_batch(4, 6, rng);
    Matrix y = x;
    y.data[5] += 0.25;
    for (auto kind : {LossKind::L1, LossKind::SmoothL1, LossKind::L2}) {
        CHECK(nn::reconstruction_loss(kind, x, x).value == 0.0);
        CHECK(nn::reconstruction_loss(kind, y, x).value > 0.0);
    }
}

TEST_CASE("bce values") {
    CHECK(nn::bce(0.5, 1.0).value == doctest::Approx(0.693147).epsilon(1e-5));
    CHECK(nn::bce(0.9, 0.0).value == doctest::Approx(2.302585).epsilon(1e-5));
    CHECK(nn::bce(1.0 - 1e-12, 1.0).value < 1e-6);  // perfect confidence
    CHECK(nn::bce(0.0, 1.0).value > 0.0);           // clamped, finite
    CHECK(std::isfinite(nn::bce(1.0, 0.0).value));
    // Non-negative for a grid of inputs.
    for (double p : {0.0, 0.1, 0.5, 0.9, 1.0}) {
        CHECK(nn::bce(p, 0.0).value >= 0.0);
        CHECK(nn::bce(p, 1.0).value >= 0.0);
    }
}

TEST_CASE("bce derivative matches finite differences inside the clamp region") {
    const double h = 1e-7;
    for (double p : {0.2, 0.5, 0.77}) {
        for (double t : {0.0, 1.0}) {
            const auto r = nn::bce(p, t);
            const double fd = (nn::bce(p + h, t).value - nn::bce(p - h, t).value) / (2.0 * h);
            CHECK(rel_err(r.dvalue_dp, fd) < 1e-5);
        }
    }
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    auto net = nn::init_network(mlp_specs(), std::uint64_t{19});
    const auto before = net.layers();
    auto state = nn::AdamState::for_network(net, nn::AdamConfig{});
    nn::Gradients zeros;
    zeros.layers.assign(net.layers().size(), nn::LayerTensors{});
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const auto& layer = net.layers()[i];
        if (layer.spec.kind == LayerKind::Linear) {
            zeros.layers[i].weight = Matrix(layer.weight.rows, layer.weight.cols, 0.0);
            zeros.layers[i].bias.assign(layer.bias.size(), 0.0);
        } else if (layer.spec.kind == LayerKind::BatchNorm) {
            zeros.layers[i].gamma.assign(layer.gamma.size(), 0.0);
            zeros.layers[i].beta.assign(layer.beta.size(), 0.0);
        }
    }
    nn::adam_step(state, net, zeros);
    CHECK(state.step == 1);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(net.layers()[i].weight.data == before[i].weight.data);
        CHECK(net.layers()[i].bias == before[i].bias);
        CHECK(net.layers()[i].gamma == before[i].gamma);
        CHECK(net.layers()[i].beta == before[i].beta);
    }
}

TEST_CASE("first adam step moves each parameter by about the learning rate") {
    auto net = nn::init_network({LayerSpec::linear(3, 2)}, std::uint64_t{23});
    const auto before = net.layers()[0];
    nn::AdamConfig cfg;
    cfg.learning_rate = 2e-4;
    auto state = nn::AdamState::for_network(net, cfg);
    nn::Gradients grads;
    grads.layers.assign(1, nn::LayerTensors{});
    grads.layers[0].weight = Matrix(3, 2, 0.37);  // constant gradient
    grads.layers[0].bias.assign(2, -0.8);
    nn::adam_step(state, net, grads);
    for (std::size_t i = 0; i < net.layers()[0].weight.data.size(); ++i) {
        const double delta = before.weight.data[i] - net.layers()[0].weight.data[i];
        CHECK(delta == doctest::Approx(2e-4).epsilon(1e-3));  // g/(|g|+eps) ~ 1
    }
    for (std::size_t i = 0; i < net.layers()[0].bias.size(); ++i) {
        const double delta = before.bias[i] - net.layers()[0].bias[i];
        CHECK(delta == doctest::Approx(-2e-4).epsilon(1e-3));
    }
}

TEST_CASE("adam updates are deterministic") {
    auto run = [] {
        auto net = nn::init_network(mlp_specs(), std::uint64_t{29});
        auto state = nn::AdamState::for_network(net, nn::AdamConfig{});
        Rng rng(71);
        for (int it = 0; it < 3; ++it) {
            const Matrix x = random_batch(8, 28, rng);
            nn::ForwardCache cache;
            const Matrix out = net.forward(x, Mode::Train, &cache);
            Matrix probe(out.rows, out.cols);
            for (double& v : probe.data) v = rng.normal();
            nn::adam_step(state, net, net.backward(cache, probe));
        }
        return net;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        CHECK(a.layers()[i].weight.data == b.layers()[i].weight.data);
        CHECK(a.layers()[i].running_var == b.layers()[i].running_var);
    }
}
