#include "ocad/serialize.hpp"

#include "ocad/errors.hpp"

namespace ocad::serialize {

using nn::LayerKind;
using nn::LayerSpec;

nlohmann::json layer_spec(const LayerSpec& spec) {
    nlohmann::json j;
    j["kind"] = nn::layer_kind_name(spec.kind);
    if (spec.kind == LayerKind::Linear) {
        j["in"] = spec.in;
        j["out"] = spec.out;
    } else if (spec.kind == LayerKind::BatchNorm) {
        j["dim"] = spec.in;
    }
    return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "linear")
        return LayerSpec::linear(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
    if (kind == "batch_norm") return LayerSpec::batch_norm(j.at("dim").get<std::size_t>());
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "sigmoid") return LayerSpec::sigmoid();
    throw CorruptFileError("unknown layer kind: " + kind);
}

nlohmann::json network_arch(const nn::Network& net) {
    nlohmann::json arch = nlohmann::json::array();
    for (const auto& layer : net.layers()) arch.push_back(layer_spec(layer.spec));
    return arch;
}

nlohmann::json network_weights(const nn::Network& net) {
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& layer : net.layers()) {
        nlohmann::json w;
        if (layer.spec.kind == LayerKind::Linear) {
            w["weight"] = layer.weight.data;
            w["bias"] = layer.bias;
        } else if (layer.spec.kind == LayerKind::BatchNorm) {
            w["gamma"] = layer.gamma;
            w["beta"] = layer.beta;
            w["running_mean"] = layer.running_mean;
            w["running_var"] = layer.running_var;
        }
        weights.push_back(w);
    }
    return weights;
}

nn::Network network_from_json(const nlohmann::json& arch, const nlohmann::json& weights) {
    if (arch.size() != weights.size()) throw CorruptFileError("arch/weights length mismatch");
    std::vector<nn::Layer> layers;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        nn::Layer layer;
        layer.spec = layer_spec_from_json(arch[i]);
        const auto& w = weights[i];
        if (layer.spec.kind == LayerKind::Linear) {
            layer.weight = Matrix(layer.spec.in, layer.spec.out);
            const auto values = w.at("weight").get<std::vector<double>>();
            if (values.size() != layer.weight.data.size())
                throw CorruptFileError("weight tensor has wrong size");
            layer.weight.data = values;
            layer.bias = w.at("bias").get<std::vector<double>>();
            if (layer.bias.size() != layer.spec.out)
                throw CorruptFileError("bias tensor has wrong size");
        } else if (layer.spec.kind == LayerKind::BatchNorm) {
            layer.gamma = w.at("gamma").get<std::vector<double>>();
            layer.beta = w.at("beta").get<std::vector<double>>();
            layer.running_mean = w.at("running_mean").get<std::vector<double>>();
            layer.running_var = w.at("running_var").get<std::vector<double>>();
            if (layer.gamma.size() != layer.spec.in || layer.beta.size() != layer.spec.in ||
                layer.running_mean.size() != layer.spec.in ||
                layer.running_var.size() != layer.spec.in)
                throw CorruptFileError("batch_norm tensor has wrong size");
            for (double v : layer.running_var)
                if (!(v > 0.0)) throw CorruptFileError("running variance must stay positive");
        }
        layers.push_back(std::move(layer));
    }
    auto net = nn::Network(std::move(layers));
    nn::validate_specs(net.specs());
    return net;
}

}  // namespace ocad::serialize
